use std::fmt::Display;

/// Error with the exit code it maps to.
pub enum Failure {
    /// Exit 1: a checked property or the integrator failed.
    Property(String),
    /// Exit 2: the request itself is invalid.
    Config(String),
}

impl Failure {
    pub fn config(e: impl Display) -> Self {
        Failure::Config(e.to_string())
    }

    pub fn property(e: impl Display) -> Self {
        Failure::Property(e.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Property(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Property(m) | Failure::Config(m) => m,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(format!("{e:#}"))
    }
}

/// `PASS/FAIL name value tolerance` lines.
#[derive(Default)]
pub struct Report {
    failed: Vec<String>,
    total: usize,
}

impl Report {
    fn line(&mut self, ok: bool, name: &str, value: f64, reference: &str) {
        self.total += 1;
        println!("{} {name} {value:.6e} {reference}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    /// Passes when `value < tol`.
    pub fn check(&mut self, name: &str, value: f64, tol: f64) {
        self.line(value < tol, name, value, &format!("{tol:.1e}"));
    }

    pub fn band(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.line((lo..=hi).contains(&value), name, value, &format!("[{lo},{hi}]"));
    }

    /// Passes when `value > reference`.
    pub fn order(&mut self, name: &str, value: f64, reference: f64) {
        self.line(value > reference, name, value, &format!(">{reference:.6e}"));
    }

    pub fn at_least(&mut self, name: &str, value: f64, reference: f64) {
        self.line(value >= reference, name, value, &format!(">={reference:.6e}"));
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn finish(self) -> Result<(), Failure> {
        if self.failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Property(format!(
                "{} of {} checks failed: {}",
                self.failed.len(),
                self.total,
                self.failed.join(", ")
            )))
        }
    }
}
