//! Bundled benchmark models.
//!
//! Three standard reaction networks with fixed parameters: a pure
//! death process, a gene transcription/translation network, and
//! Michaelis-Menten enzyme kinetics. Each is constructed
//! programmatically here and also shipped as a JSON model file; tests
//! assert the two agree so transcription errors cannot drift in.

use crate::network::{Observable, ReactionNetwork, StateVector};

pub const DECAY_JSON: &str = include_str!("../../../models/decay.json");
pub const GENE_JSON: &str = include_str!("../../../models/gene.json");
pub const MM_JSON: &str = include_str!("../../../models/mm.json");

/// A network bundled with its initial state, horizon, default
/// observable, and default coarsest level.
#[derive(Debug, Clone)]
pub struct NamedModel {
    pub name: &'static str,
    pub network: ReactionNetwork,
    pub x0: StateVector,
    pub t_final: f64,
    pub observable: Observable,
    pub default_l0: u32,
}

/// Pure death process: X -> 0 at rate 1, ten initial molecules,
/// horizon 1. Quantity of interest: E[X(1)] = 10 e^-1.
pub fn decay_model() -> NamedModel {
    let network = ReactionNetwork::from_reactions(
        vec!["X".into()],
        &[(vec![1], vec![0], 1.0)],
    )
    .expect("decay model parameters are valid");
    NamedModel {
        name: "decay",
        network,
        x0: vec![10],
        t_final: 1.0,
        observable: Observable::Projection(0),
        default_l0: 0,
    }
}

/// Gene transcription and translation over species (R, P, D):
/// birth of R, translation R -> R + P, dimerization 2P -> D, and
/// degradation of R and P. Quantity of interest: E[R(1)].
/// The coarsest useful level for this model is 2; shallower grids
/// leave the coupled-level variance unstable.
pub fn gene_model() -> NamedModel {
    let network = ReactionNetwork::from_reactions(
        vec!["R".into(), "P".into(), "D".into()],
        &[
            (vec![0, 0, 0], vec![1, 0, 0], 25.0),
            (vec![1, 0, 0], vec![1, 1, 0], 1000.0),
            (vec![0, 2, 0], vec![0, 0, 1], 0.001),
            (vec![1, 0, 0], vec![0, 0, 0], 0.1),
            (vec![0, 1, 0], vec![0, 0, 0], 1.0),
        ],
    )
    .expect("gene model parameters are valid");
    NamedModel {
        name: "gene",
        network,
        x0: vec![0, 0, 0],
        t_final: 1.0,
        observable: Observable::Projection(0),
        default_l0: 2,
    }
}

/// Michaelis-Menten enzyme kinetics over (E, S, C, P): binding
/// E + S -> C, unbinding C -> E + S, and conversion C -> E + P.
/// Quantity of interest: E[C(1)].
pub fn michaelis_menten_model() -> NamedModel {
    let network = ReactionNetwork::from_reactions(
        vec!["E".into(), "S".into(), "C".into(), "P".into()],
        &[
            (vec![1, 1, 0, 0], vec![0, 0, 1, 0], 0.001),
            (vec![0, 0, 1, 0], vec![1, 1, 0, 0], 0.005),
            (vec![0, 0, 1, 0], vec![1, 0, 0, 1], 0.01),
        ],
    )
    .expect("Michaelis-Menten model parameters are valid");
    NamedModel {
        name: "mm",
        network,
        x0: vec![100, 100, 0, 0],
        t_final: 1.0,
        observable: Observable::Projection(2),
        default_l0: 0,
    }
}

/// Looks up a bundled model by name: decay, gene, or mm.
pub fn by_name(name: &str) -> Option<NamedModel> {
    match name {
        "decay" => Some(decay_model()),
        "gene" => Some(gene_model()),
        "mm" => Some(michaelis_menten_model()),
        _ => None,
    }
}

pub const MODEL_NAMES: [&str; 3] = ["decay", "gene", "mm"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{sensitive_set, ModelFile};

    #[test]
    fn decay_structure() {
        let m = decay_model();
        assert_eq!(m.network.stoich(), &[vec![-1]]);
        assert_eq!(m.network.propensities(&m.x0), vec![10.0]);
        assert_eq!(sensitive_set(&m.observable, &m.network), vec![0]);
        assert_eq!(m.t_final, 1.0);
    }

    #[test]
    fn gene_structure() {
        let m = gene_model();
        assert_eq!(m.network.stoich()[2], vec![0, -2, 1], "dimerization row");
        assert_eq!(
            m.network.propensities(&[0, 0, 0]),
            vec![25.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(sensitive_set(&m.observable, &m.network), vec![0, 3]);
        assert_eq!(m.default_l0, 2);
        assert_eq!(m.network.rates(), &[25.0, 1000.0, 0.001, 0.1, 1.0]);
    }

    #[test]
    fn michaelis_menten_structure() {
        let m = michaelis_menten_model();
        assert_eq!(m.network.stoich()[0], vec![-1, -1, 1, 0], "binding row");
        assert_eq!(m.network.propensities(&m.x0), vec![10.0, 0.0, 0.0]);
        assert_eq!(sensitive_set(&m.observable, &m.network), vec![0, 1, 2]);
    }

    #[test]
    fn michaelis_menten_stoichiometry_conserves_e_plus_c_and_s_plus_c_plus_p() {
        let m = michaelis_menten_model();
        for (j, row) in m.network.stoich().iter().enumerate() {
            assert_eq!(row[0] + row[2], 0, "E + C not conserved by reaction {j}");
            assert_eq!(row[1] + row[2] + row[3], 0, "S + C + P not conserved by reaction {j}");
        }
    }

    /// Every bundled JSON file builds exactly the same network, state,
    /// and horizon as the programmatic constructor.
    #[test]
    fn bundled_files_agree_with_constructors() {
        for (json, ctor) in [
            (DECAY_JSON, decay_model()),
            (GENE_JSON, gene_model()),
            (MM_JSON, michaelis_menten_model()),
        ] {
            let file = ModelFile::from_json(json).unwrap();
            let (net, x0, t) = file.build().unwrap();
            assert_eq!(net, ctor.network, "{} network differs from file", ctor.name);
            assert_eq!(x0, ctor.x0, "{} initial state differs from file", ctor.name);
            assert_eq!(t, ctor.t_final, "{} final time differs from file", ctor.name);
        }
    }

    #[test]
    fn by_name_resolves_all_bundled_models() {
        for name in MODEL_NAMES {
            assert!(by_name(name).is_some(), "model {name} should resolve");
        }
        assert!(by_name("unknown").is_none());
    }
}
