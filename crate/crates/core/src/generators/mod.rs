//! Instance generators for the example problem families.

mod converter;
mod decode;
mod random;
mod vehicle;

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use converter::{
    circuit_dynamics, converter_point, gen_power_converter, ConverterInstance, ConverterParams,
};
pub use decode::{bit_error_rate, gen_signal_decode, DecodeInstance, CONSTELLATION};
pub use random::{gen_random_convex_qp, gen_random_miqp};
pub use vehicle::{gen_hybrid_vehicle, synthetic_demand, VehicleInstance, VehicleParams};

/// Names of the canonical coordinates, written `group[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct VariableMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VariableMap {
    pub fn new(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), i))
            .collect();
        VariableMap { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> Option<&str> {
        self.names.get(i).map(String::as_str)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Coordinates of `group[0]`, `group[1]`, ... up to the first gap.
    pub fn series(&self, group: &str) -> Vec<usize> {
        (0..)
            .map_while(|t| self.index(&format!("{group}[{t}]")))
            .collect()
    }

    /// True when every name is distinct.
    pub fn is_bijective(&self) -> bool {
        self.index.len() == self.names.len()
    }
}

impl From<Vec<String>> for VariableMap {
    fn from(names: Vec<String>) -> Self {
        VariableMap::new(names)
    }
}

impl From<VariableMap> for Vec<String> {
    fn from(map: VariableMap) -> Self {
        map.names
    }
}

/// `(M + M') / 2`, removing rounding asymmetry from products like `QQ'`.
pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
