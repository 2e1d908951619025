//! Scenarios shipped with the library, addressable as `builtin:<name>`.

use crate::error::{Error, Result};
use crate::scenario::{parse_scenario, Scenario};

pub const PREFIX: &str = "builtin:";

const BUILTINS: &[(&str, &str)] = &[
    ("two-device-case1a", include_str!("../../scenarios/two-device-case1a.json")),
    ("two-device-case1b", include_str!("../../scenarios/two-device-case1b.json")),
    ("two-device-case1c", include_str!("../../scenarios/two-device-case1c.json")),
    ("two-device-case1d", include_str!("../../scenarios/two-device-case1d.json")),
    ("two-device-case2a", include_str!("../../scenarios/two-device-case2a.json")),
    ("two-device-case2b", include_str!("../../scenarios/two-device-case2b.json")),
    ("four-device-case3", include_str!("../../scenarios/four-device-case3.json")),
    ("four-device-case4a", include_str!("../../scenarios/four-device-case4a.json")),
    ("four-device-case4b", include_str!("../../scenarios/four-device-case4b.json")),
    ("gscr-bridge", include_str!("../../scenarios/gscr-bridge.json")),
];

pub fn names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

/// Raw JSON of a built-in scenario.
pub fn text(name: &str) -> Result<&'static str> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::input(format!("unknown built-in scenario '{name}' (available: {})", names().join(", "))))
}

pub fn load(name: &str) -> Result<Scenario> {
    parse_scenario(text(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceKind;

    #[test]
    fn every_builtin_parses_and_round_trips() {
        for name in names() {
            let s = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
            assert_eq!(crate::scenario::parse_scenario(&s.to_json()).unwrap(), s);
        }
    }

    #[test]
    fn case_1a_contents() {
        let s = load("two-device-case1a").unwrap();
        let f = s.nominal_frequency();
        assert_eq!((f.j, f.d), (10.0, 10.0));
        assert_eq!(s.devices.iter().map(|d| d.s_theta.unwrap()).collect::<Vec<_>>(), vec![1.0, 1.0]);
        assert!((1.0 / s.branches[0].x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn case_4_has_loads_and_assumptions() {
        let s = load("four-device-case4a").unwrap();
        assert_eq!(s.devices.iter().filter(|d| d.kind == DeviceKind::Crpl).count(), 2);
        assert_eq!(s.assumptions().count(), 2);
    }

    #[test]
    fn unknown_name() {
        assert!(text("case9").unwrap_err().to_string().contains("two-device-case1a"));
    }
}
