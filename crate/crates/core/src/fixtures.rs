//! Counts tables shipped with the crate.

use crate::tomo::CountsData;

pub const TABLE1_CSV: &str = include_str!("../data/table1.csv");
pub const TABLE2_CSV: &str = include_str!("../data/table2.csv");
pub const TABLE3_CSV: &str = include_str!("../data/table3.csv");

/// Qubit amplitude damping (γ = 0.4), tetrahedron scheme, 24 copies per input.
pub fn table1() -> CountsData {
    CountsData::read_csv(TABLE1_CSV.as_bytes()).expect("fixture parses")
}

/// Qutrit amplitude damping (γ₁ = 0.1, γ₂ = 0.5), SIC scheme, 27 copies per input.
pub fn table2() -> CountsData {
    CountsData::read_csv(TABLE2_CSV.as_bytes()).expect("fixture parses")
}

/// Pauli channel (0.05, 0.15, 0.2), tetrahedron scheme, 24 copies per input.
pub fn table3() -> CountsData {
    CountsData::read_csv(TABLE3_CSV.as_bytes()).expect("fixture parses")
}

#[cfg(test)]
mod tests {
    #[test]
    fn totals() {
        assert_eq!(super::table1().total(), 96);
        assert_eq!(super::table2().total(), 243);
        assert_eq!(super::table3().total(), 96);
        assert!(super::table2().row_totals().iter().all(|&t| t == 27));
    }
}
