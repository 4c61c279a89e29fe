use std::collections::BTreeSet;
use std::path::Path;

use super::GridError;

/// Buses carrying a PMU. Each PMU reports its bus voltage and the current
/// on every incident branch end.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PmuPlacement {
    pub pmu_buses: BTreeSet<usize>,
}

impl PmuPlacement {
    pub fn new(buses: impl IntoIterator<Item = usize>) -> Self {
        PmuPlacement { pmu_buses: buses.into_iter().collect() }
    }

    /// One bus id per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut pmu_buses = BTreeSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let id = line.parse::<usize>().map_err(|_| GridError::Syntax {
                line: k + 1,
                message: format!("expected a bus id, found {line:?}"),
            })?;
            pmu_buses.insert(id);
        }
        Ok(PmuPlacement { pmu_buses })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.pmu_buses.iter().map(|b| format!("{b}\n")).collect()
    }

    pub fn contains(&self, bus: usize) -> bool {
        self.pmu_buses.contains(&bus)
    }

    pub fn len(&self) -> usize {
        self.pmu_buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmu_buses.is_empty()
    }
}
