//! Element symbols found in QM9 and MD17 molecules.

const TABLE: &[(&str, u32)] = &[
    ("H", 1),
    ("C", 6),
    ("N", 7),
    ("O", 8),
    ("F", 9),
    ("S", 16),
    ("Cl", 17),
];

pub fn atomic_number(symbol: &str) -> Option<u32> {
    TABLE.iter().find(|(s, _)| *s == symbol).map(|&(_, z)| z)
}

pub fn symbol(atomic_number: u32) -> Option<&'static str> {
    TABLE
        .iter()
        .find(|&&(_, z)| z == atomic_number)
        .map(|&(s, _)| s)
}
