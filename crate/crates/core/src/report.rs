//! Check reports shared by every validating operation.

use serde::{Deserialize, Serialize};

/// One named check with its measured residual.
///
/// `residual` is whatever quantity the check compares against its threshold
/// (a norm, a rank defect, an eigenvalue margin); it is always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub subject: String,
    pub entries: Vec<CheckEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(subject: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            entries: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, passed: bool, residual: f64) -> &mut Self {
        self.push_at(name, passed, residual, None::<String>)
    }

    pub fn push_at(
        &mut self,
        name: impl Into<String>,
        passed: bool,
        residual: f64,
        location: Option<impl Into<String>>,
    ) -> &mut Self {
        let residual = if residual.is_finite() { residual } else { f64::MAX };
        self.entries.push(CheckEntry {
            name: name.into(),
            passed,
            residual,
            location: location.map(Into::into),
        });
        self
    }

    /// Record `residual <= threshold`.
    pub fn check(&mut self, name: impl Into<String>, residual: f64, threshold: f64) -> &mut Self {
        self.push(name, residual <= threshold, residual)
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
        self.notes.extend(other.notes);
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.subject)?;
        for e in &self.entries {
            let status = if e.passed { "pass" } else { "FAIL" };
            write!(f, "  [{status}] {} residual={:.3e}", e.name, e.residual)?;
            if let Some(loc) = &e.location {
                write!(f, " at {loc}")?;
            }
            writeln!(f)?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}
