//! Bundled test systems, embedded as source text.

pub const CASE2: &str = include_str!("../cases/case2.m");
pub const CASE3: &str = include_str!("../cases/case3.m");
pub const CASE9: &str = include_str!("../cases/case9.m");
pub const CASE14: &str = include_str!("../cases/case14.m");

/// All bundled cases as (name, source) pairs, smallest first.
pub fn bundled() -> Vec<(&'static str, &'static str)> {
    vec![("case2", CASE2), ("case3", CASE3), ("case9", CASE9), ("case14", CASE14)]
}

pub fn by_name(name: &str) -> Option<&'static str> {
    bundled().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::parse_case;

    #[test]
    fn all_bundled_cases_parse_and_validate() {
        for (name, text) in bundled() {
            let case = parse_case(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            case.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn bundled_sizes() {
        let sizes: Vec<usize> = bundled()
            .iter()
            .map(|(_, t)| parse_case(t).unwrap().n())
            .collect();
        assert_eq!(sizes, vec![2, 3, 9, 14]);
    }
}
