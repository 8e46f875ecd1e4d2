//! Reaction networks, states, and scalar observables.
//!
//! A network holds the stoichiometry matrix `nu` (net change per
//! reaction), the reactant-order matrix `alpha` (molecules consumed),
//! and the rate constants `theta`. Propensities follow stochastic
//! mass-action kinetics: falling-factorial products of the species
//! counts, zeroed whenever a species count is below its reactant
//! order. States are signed so that tau-leap overshoots below zero are
//! representable; the indicator in the propensity keeps such states
//! absorbing rather than producing negative rates.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Species counts. Signed: initial states are non-negative, but
/// tau-leap updates may drive components negative.
pub type StateVector = Vec<i64>;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("model has no species")]
    NoSpecies,
    #[error("model has no reactions")]
    NoReactions,
    #[error("reaction {reaction}: rate {rate} is not positive and finite")]
    BadRate { reaction: usize, rate: f64 },
    #[error("unknown species `{0}` in reaction table")]
    UnknownSpecies(String),
    #[error("species `{0}` listed more than once")]
    DuplicateSpecies(String),
    #[error("initial count for `{species}` is negative ({count})")]
    NegativeInitial { species: String, count: i64 },
    #[error("final_time {0} is not positive and finite")]
    BadFinalTime(f64),
    #[error("state update overflowed machine integers")]
    Overflow,
    #[error("observable index {index} out of range for {num_species} species")]
    ObservableIndex { index: usize, num_species: usize },
    #[error("observable weight vector has length {got}, expected {expected}")]
    ObservableLength { got: usize, expected: usize },
    #[error("failed to parse model file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Mass-action reaction network: `J` reactions over `d` species.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species_names: Vec<String>,
    /// Net state change per reaction, row-major `J x d`.
    stoich: Vec<Vec<i64>>,
    /// Consumed molecule counts per reaction, row-major `J x d`.
    reactant_order: Vec<Vec<u32>>,
    /// Rate constants, length `J`, all positive.
    rates: Vec<f64>,
}

impl ReactionNetwork {
    /// Builds a network from reactant/product counts per reaction.
    /// `nu` is derived as products minus reactants; `alpha` is the
    /// reactant table itself. Deriving both from one source keeps them
    /// consistent by construction.
    pub fn from_reactions(
        species_names: Vec<String>,
        reactions: &[(Vec<u32>, Vec<u32>, f64)],
    ) -> Result<Self, NetworkError> {
        let d = species_names.len();
        if d == 0 {
            return Err(NetworkError::NoSpecies);
        }
        if reactions.is_empty() {
            return Err(NetworkError::NoReactions);
        }
        for name in &species_names {
            if species_names.iter().filter(|n| *n == name).count() > 1 {
                return Err(NetworkError::DuplicateSpecies(name.clone()));
            }
        }
        let mut stoich = Vec::with_capacity(reactions.len());
        let mut reactant_order = Vec::with_capacity(reactions.len());
        let mut rates = Vec::with_capacity(reactions.len());
        for (j, (reactants, products, rate)) in reactions.iter().enumerate() {
            assert_eq!(reactants.len(), d, "reactant row {j} has wrong width");
            assert_eq!(products.len(), d, "product row {j} has wrong width");
            if !(rate.is_finite() && *rate > 0.0) {
                return Err(NetworkError::BadRate { reaction: j, rate: *rate });
            }
            let row: Vec<i64> = reactants
                .iter()
                .zip(products)
                .map(|(&r, &p)| i64::from(p) - i64::from(r))
                .collect();
            stoich.push(row);
            reactant_order.push(reactants.clone());
            rates.push(*rate);
        }
        Ok(Self { species_names, stoich, reactant_order, rates })
    }

    pub fn num_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.rates.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn stoich(&self) -> &[Vec<i64>] {
        &self.stoich
    }

    pub fn reactant_order(&self) -> &[Vec<u32>] {
        &self.reactant_order
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Mass-action propensities at `x`, written into `out` (length `J`).
    /// `a_j = theta_j * prod_i x_i * (x_i - 1) * ... * (x_i - alpha_ji + 1)`,
    /// and `a_j = 0` whenever any `x_i < alpha_ji` (negative counts
    /// included). Every output is finite and non-negative.
    pub fn propensities_into(&self, x: &[i64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.num_species());
        debug_assert_eq!(out.len(), self.num_reactions());
        for (j, a) in out.iter_mut().enumerate() {
            *a = self.propensity(j, x);
        }
    }

    /// Allocating variant of [`propensities_into`](Self::propensities_into).
    pub fn propensities(&self, x: &[i64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_reactions()];
        self.propensities_into(x, &mut out);
        out
    }

    fn propensity(&self, j: usize, x: &[i64]) -> f64 {
        let mut a = self.rates[j];
        for (i, &order) in self.reactant_order[j].iter().enumerate() {
            if order == 0 {
                continue;
            }
            let xi = x[i];
            if xi < i64::from(order) {
                return 0.0;
            }
            // Falling factorial by repeated multiplication; counts at
            // this scale keep the product exact in f64.
            for step in 0..i64::from(order) {
                a *= (xi - step) as f64;
            }
        }
        a
    }

    /// Applies `k_j` firings of each reaction: `x + sum_j k_j * nu_j`.
    /// The result may be negative. Overflow is a hard error.
    pub fn apply_firings(&self, x: &StateVector, k: &[u64]) -> Result<StateVector, NetworkError> {
        let mut out = x.clone();
        self.apply_firings_in_place(&mut out, k)?;
        Ok(out)
    }

    /// In-place form of [`apply_firings`](Self::apply_firings) for hot
    /// loops. On overflow the state is left partially updated; callers
    /// must treat the path as failed.
    pub fn apply_firings_in_place(
        &self,
        x: &mut StateVector,
        k: &[u64],
    ) -> Result<(), NetworkError> {
        debug_assert_eq!(k.len(), self.num_reactions());
        for (j, &kj) in k.iter().enumerate() {
            if kj == 0 {
                continue;
            }
            let kj = i64::try_from(kj).map_err(|_| NetworkError::Overflow)?;
            for (i, &nu) in self.stoich[j].iter().enumerate() {
                if nu == 0 {
                    continue;
                }
                let delta = kj.checked_mul(nu).ok_or(NetworkError::Overflow)?;
                x[i] = x[i].checked_add(delta).ok_or(NetworkError::Overflow)?;
            }
        }
        Ok(())
    }

    /// Applies a single firing of reaction `j` in place.
    pub fn apply_single_firing(&self, x: &mut StateVector, j: usize) -> Result<(), NetworkError> {
        for (i, &nu) in self.stoich[j].iter().enumerate() {
            if nu != 0 {
                x[i] = x[i].checked_add(nu).ok_or(NetworkError::Overflow)?;
            }
        }
        Ok(())
    }
}

/// Scalar observable of the state: a coordinate projection or a linear
/// map with fixed weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `g(x) = x[i]` (0-based species index).
    Projection(usize),
    /// `g(x) = w . x`.
    Linear(Vec<f64>),
}

impl Observable {
    pub fn validate(&self, net: &ReactionNetwork) -> Result<(), NetworkError> {
        match self {
            Observable::Projection(i) => {
                if *i >= net.num_species() {
                    return Err(NetworkError::ObservableIndex {
                        index: *i,
                        num_species: net.num_species(),
                    });
                }
            }
            Observable::Linear(w) => {
                if w.len() != net.num_species() {
                    return Err(NetworkError::ObservableLength {
                        got: w.len(),
                        expected: net.num_species(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Evaluates the observable. Projection values are exact integers.
pub fn observe(g: &Observable, x: &[i64]) -> f64 {
    match g {
        Observable::Projection(i) => x[*i] as f64,
        Observable::Linear(w) => {
            debug_assert_eq!(w.len(), x.len());
            w.iter().zip(x).map(|(wi, &xi)| wi * xi as f64).sum()
        }
    }
}

/// Reactions whose firing changes the observable:
/// `{ j : g(x + nu_j) != g(x) for all x }`. For a projection on species
/// `i` that is `{ j : nu_ji != 0 }`; for a linear map, `{ j : w . nu_j != 0 }`.
/// Indices are 0-based and sorted.
pub fn sensitive_set(g: &Observable, net: &ReactionNetwork) -> Vec<usize> {
    (0..net.num_reactions())
        .filter(|&j| {
            let nu = &net.stoich()[j];
            match g {
                Observable::Projection(i) => nu[*i] != 0,
                Observable::Linear(w) => {
                    let dot: f64 = w.iter().zip(nu).map(|(wi, &n)| wi * n as f64).sum();
                    dot != 0.0
                }
            }
        })
        .collect()
}

/// On-disk model description. Reactions list reactant and product
/// counts by species name; `nu` and `alpha` are always derived from
/// these, never entered by hand.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub species: Vec<String>,
    pub initial: BTreeMap<String, i64>,
    pub reactions: Vec<ReactionEntry>,
    pub final_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReactionEntry {
    #[serde(default)]
    pub reactants: BTreeMap<String, u32>,
    #[serde(default)]
    pub products: BTreeMap<String, u32>,
    pub rate: f64,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    /// Builds the runtime network plus initial state and final time.
    pub fn build(&self) -> Result<(ReactionNetwork, StateVector, f64), NetworkError> {
        if !(self.final_time.is_finite() && self.final_time > 0.0) {
            return Err(NetworkError::BadFinalTime(self.final_time));
        }
        let index_of = |name: &str| -> Result<usize, NetworkError> {
            self.species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| NetworkError::UnknownSpecies(name.to_string()))
        };
        let d = self.species.len();
        let mut reactions = Vec::with_capacity(self.reactions.len());
        for entry in &self.reactions {
            let mut reactants = vec![0u32; d];
            let mut products = vec![0u32; d];
            for (name, &count) in &entry.reactants {
                reactants[index_of(name)?] = count;
            }
            for (name, &count) in &entry.products {
                products[index_of(name)?] = count;
            }
            reactions.push((reactants, products, entry.rate));
        }
        let net = ReactionNetwork::from_reactions(self.species.clone(), &reactions)?;
        let mut x0 = vec![0i64; d];
        for (name, &count) in &self.initial {
            if count < 0 {
                return Err(NetworkError::NegativeInitial {
                    species: name.clone(),
                    count,
                });
            }
            x0[index_of(name)?] = count;
        }
        Ok((net, x0, self.final_time))
    }

    /// Reconstructs the file form of a network. Inverse of [`build`](Self::build)
    /// up to omission of zero entries in the count maps.
    pub fn from_network(net: &ReactionNetwork, x0: &[i64], final_time: f64) -> Self {
        let species = net.species_names().to_vec();
        let reactions = (0..net.num_reactions())
            .map(|j| {
                let mut reactants = BTreeMap::new();
                let mut products = BTreeMap::new();
                for (i, name) in species.iter().enumerate() {
                    let alpha = net.reactant_order()[j][i];
                    if alpha > 0 {
                        reactants.insert(name.clone(), alpha);
                    }
                    let prod = i64::from(alpha) + net.stoich()[j][i];
                    debug_assert!(prod >= 0, "product count cannot be negative");
                    if prod > 0 {
                        products.insert(name.clone(), prod as u32);
                    }
                }
                ReactionEntry { reactants, products, rate: net.rates()[j] }
            })
            .collect();
        let initial = species
            .iter()
            .zip(x0)
            .filter(|(_, &c)| c != 0)
            .map(|(name, &c)| (name.clone(), c))
            .collect();
        ModelFile { species, initial, reactions, final_time }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use proptest::prelude::*;

    /// Exact falling factorial in unsigned 128-bit arithmetic.
    fn falling_factorial_exact(x: i64, order: u32) -> u128 {
        if x < i64::from(order) {
            return 0;
        }
        let mut p: u128 = 1;
        for step in 0..i64::from(order) {
            p *= (x - step) as u128;
        }
        p
    }

    #[test]
    fn decay_propensity_at_ten_is_ten() {
        let m = models::decay_model();
        assert_eq!(m.network.propensities(&[10]), vec![10.0]);
    }

    #[test]
    fn decay_propensity_at_zero_vanishes() {
        let m = models::decay_model();
        assert_eq!(m.network.propensities(&[0]), vec![0.0]);
    }

    #[test]
    fn decay_propensity_at_negative_count_vanishes() {
        let m = models::decay_model();
        assert_eq!(m.network.propensities(&[-3]), vec![0.0]);
    }

    #[test]
    fn gene_propensities_at_2_3_0() {
        let m = models::gene_model();
        let a = m.network.propensities(&[2, 3, 0]);
        let expected = [25.0, 2000.0, 0.006, 0.2, 3.0];
        for (j, (&got, &want)) in a.iter().zip(&expected).enumerate() {
            assert!(
                (got - want).abs() < 1e-12 * want.max(1.0),
                "reaction {j}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn michaelis_menten_propensities_at_initial_state() {
        let m = models::michaelis_menten_model();
        let a = m.network.propensities(&[100, 100, 0, 0]);
        assert_eq!(a, vec![10.0, 0.0, 0.0]);
    }

    #[test]
    fn apply_firings_decay() {
        let m = models::decay_model();
        let out = m.network.apply_firings(&vec![10], &[3]).unwrap();
        assert_eq!(out, vec![7]);
    }

    #[test]
    fn apply_firings_zero_vector_is_identity() {
        let m = models::gene_model();
        let x = vec![4, 7, 2];
        let out = m.network.apply_firings(&x, &[0, 0, 0, 0, 0]).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn apply_firings_gene_first_reaction() {
        let m = models::gene_model();
        let out = m.network.apply_firings(&vec![0, 0, 0], &[2, 0, 0, 0, 0]).unwrap();
        assert_eq!(out, vec![2, 0, 0]);
    }

    #[test]
    fn apply_firings_overflow_is_hard_error() {
        let m = models::decay_model();
        let err = m.network.apply_firings(&vec![i64::MIN + 1], &[2]);
        assert!(matches!(err, Err(NetworkError::Overflow)), "expected overflow error");
    }

    #[test]
    fn observe_projection_and_linear() {
        assert_eq!(observe(&Observable::Projection(2), &[100, 100, 5, 0]), 5.0);
        assert_eq!(
            observe(&Observable::Linear(vec![1.0, 1.0, 0.0, 0.0]), &[2, 3, 0, 0]),
            5.0
        );
        assert_eq!(observe(&Observable::Projection(0), &[7, 900, 40]), 7.0);
    }

    #[test]
    fn sensitive_set_gene_projection_on_first_species() {
        let m = models::gene_model();
        // 0-based reaction indices of the rows with nonzero first column.
        assert_eq!(sensitive_set(&Observable::Projection(0), &m.network), vec![0, 3]);
    }

    #[test]
    fn sensitive_set_michaelis_menten_projection_on_complex() {
        let m = models::michaelis_menten_model();
        assert_eq!(sensitive_set(&Observable::Projection(2), &m.network), vec![0, 1, 2]);
    }

    #[test]
    fn sensitive_set_decay() {
        let m = models::decay_model();
        assert_eq!(sensitive_set(&Observable::Projection(0), &m.network), vec![0]);
    }

    #[test]
    fn propensity_matches_big_integer_factorial_oracle() {
        let m = models::gene_model();
        let net = &m.network;
        for r in -2i64..6 {
            for p in -2i64..6 {
                for d in -2i64..3 {
                    let x = vec![r, p, d];
                    let a = net.propensities(&x);
                    for j in 0..net.num_reactions() {
                        let mut want = net.rates()[j];
                        let mut zero = false;
                        for (i, &order) in net.reactant_order()[j].iter().enumerate() {
                            if order == 0 {
                                continue;
                            }
                            let ff = falling_factorial_exact(x[i], order);
                            if ff == 0 && x[i] < i64::from(order) {
                                zero = true;
                            }
                            want *= ff as f64;
                        }
                        let want = if zero { 0.0 } else { want };
                        assert!(
                            (a[j] - want).abs() <= 1e-12 * want.abs().max(1.0),
                            "state {x:?} reaction {j}: got {}, oracle {want}",
                            a[j]
                        );
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn propensities_nonnegative_and_finite_on_any_state(
            x in proptest::collection::vec(-50i64..200, 3)
        ) {
            let m = models::gene_model();
            let a = m.network.propensities(&x);
            for (j, &aj) in a.iter().enumerate() {
                prop_assert!(aj.is_finite(), "reaction {} not finite at {:?}", j, x);
                prop_assert!(aj >= 0.0, "reaction {} negative at {:?}: {}", j, x, aj);
            }
        }

        #[test]
        fn sensitive_set_agrees_with_observable_change(
            x in proptest::collection::vec(-10i64..1000, 4),
            idx in 0usize..4
        ) {
            let m = models::michaelis_menten_model();
            let g = Observable::Projection(idx);
            let j1 = sensitive_set(&g, &m.network);
            for j in 0..m.network.num_reactions() {
                let fired = m.network.apply_firings(&x, &unit_firing(j, 3)).unwrap();
                let changes = observe(&g, &fired) != observe(&g, &x);
                prop_assert_eq!(
                    changes,
                    j1.contains(&j),
                    "reaction {} at {:?}", j, x
                );
            }
        }
    }

    fn unit_firing(j: usize, num_reactions: usize) -> Vec<u64> {
        let mut k = vec![0u64; num_reactions];
        k[j] = 1;
        k
    }

    #[test]
    fn model_file_round_trip_preserves_structure() {
        let m = models::gene_model();
        let file = ModelFile::from_network(&m.network, &m.x0, m.t_final);
        let text = file.to_json();
        let reparsed = ModelFile::from_json(&text).unwrap();
        let (net2, x02, t2) = reparsed.build().unwrap();
        assert_eq!(net2, m.network, "network changed across round trip");
        assert_eq!(x02, m.x0, "initial state changed across round trip");
        assert_eq!(t2, m.t_final, "final time changed across round trip");
    }

    #[test]
    fn model_file_rejects_unknown_species() {
        let text = r#"{
            "species": ["A"],
            "initial": {"B": 1},
            "reactions": [{"reactants": {"A": 1}, "products": {}, "rate": 1.0}],
            "final_time": 1.0
        }"#;
        let file = ModelFile::from_json(text).unwrap();
        assert!(matches!(file.build(), Err(NetworkError::UnknownSpecies(_))));
    }

    #[test]
    fn model_file_rejects_nonpositive_rate() {
        let text = r#"{
            "species": ["A"],
            "initial": {"A": 1},
            "reactions": [{"reactants": {"A": 1}, "products": {}, "rate": 0.0}],
            "final_time": 1.0
        }"#;
        let file = ModelFile::from_json(text).unwrap();
        assert!(matches!(file.build(), Err(NetworkError::BadRate { .. })));
    }

    #[test]
    fn model_file_rejects_negative_initial() {
        let text = r#"{
            "species": ["A"],
            "initial": {"A": -2},
            "reactions": [{"reactants": {"A": 1}, "products": {}, "rate": 1.0}],
            "final_time": 1.0
        }"#;
        let file = ModelFile::from_json(text).unwrap();
        assert!(matches!(file.build(), Err(NetworkError::NegativeInitial { .. })));
    }
}
