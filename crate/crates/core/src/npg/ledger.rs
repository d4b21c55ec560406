//! The chain of constants that turns the model assumptions into per-state
//! step sizes and the final rate constant.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Supplied,
    Fitted,
    Derived,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Supplied => "supplied",
            Provenance::Fitted => "fitted",
            Provenance::Derived => "derived",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub name: &'static str,
    pub value: f64,
    pub provenance: Provenance,
    pub note: String,
}

/// A value together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagged {
    pub value: f64,
    pub provenance: Provenance,
    pub note: String,
}

impl Tagged {
    pub fn supplied(value: f64) -> Self {
        Tagged { value, provenance: Provenance::Supplied, note: String::new() }
    }

    pub fn fitted(value: f64, note: impl Into<String>) -> Self {
        Tagged { value, provenance: Provenance::Fitted, note: note.into() }
    }

    pub fn derived(value: f64, note: impl Into<String>) -> Self {
        Tagged { value, provenance: Provenance::Derived, note: note.into() }
    }
}

/// Non-derived inputs of the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerInputs {
    pub action_count: usize,
    pub c_max: Tagged,
    pub r1: Tagged,
    pub r2: Tagged,
    pub r3: Tagged,
    pub r4: Tagged,
    pub c0: Tagged,
    pub c1: Tagged,
    pub z: Tagged,
    pub j0: Tagged,
    pub x_z: Tagged,
    pub p_z: Tagged,
    /// Exact optimal average reward, when an oracle has computed it. Without it,
    /// `c_max` stands in where the optimum enters increasingly and `J_0` where it
    /// enters decreasingly, so every derived bound only gets looser.
    pub j_star: Option<f64>,
}

pub const NAMES: [&str; 23] = [
    "c_max",
    "R_1",
    "R_2",
    "R_3",
    "R_4",
    "c_0",
    "c_1",
    "z",
    "J_0",
    "J_star_upper",
    "J_star_lower",
    "x_z",
    "p_z",
    "tau_bound",
    "c_5_lemma",
    "c_6_lemma",
    "c_7_lemma",
    "c_2",
    "c_3",
    "c_4",
    "c_5_main",
    "c_6_main",
    "c_star",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsLedger {
    pub action_count: usize,
    pub entries: Vec<LedgerEntry>,
}

/// `x_z (c_max - y) / (p_z^2 (y - z)) + x_z`
pub fn tau_bound(x_z: f64, p_z: f64, c_max: f64, y: f64, z: f64) -> f64 {
    x_z * (c_max - y) / (p_z * p_z * (y - z)) + x_z
}

impl ConstantsLedger {
    pub fn derive(inputs: &LedgerInputs) -> Result<Self> {
        Self::derive_with_overrides(inputs, &BTreeMap::new())
    }

    /// Derives the chain, replacing any named entry (input or derived) by a
    /// supplied value. Entries downstream of an override use the override.
    pub fn derive_with_overrides(inputs: &LedgerInputs, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        if let Some(bad) = overrides.keys().find(|k| !NAMES.contains(&k.as_str())) {
            return Err(Error::InvalidLedger(format!("unknown ledger entry '{bad}'")));
        }
        if inputs.action_count == 0 {
            return Err(Error::InvalidLedger("action count must be positive".into()));
        }
        let mut entries: Vec<LedgerEntry> = Vec::with_capacity(NAMES.len());
        let mut put = |name: &'static str, t: Tagged| -> f64 {
            let t = match overrides.get(name) {
                Some(&v) => Tagged { value: v, provenance: Provenance::Supplied, note: "override".into() },
                None => t,
            };
            entries.push(LedgerEntry { name, value: t.value, provenance: t.provenance, note: t.note });
            t.value
        };

        let c_max = put("c_max", inputs.c_max.clone());
        let r1 = put("R_1", inputs.r1.clone());
        let r2 = put("R_2", inputs.r2.clone());
        let r3 = put("R_3", inputs.r3.clone());
        let r4 = put("R_4", inputs.r4.clone());
        let c0 = put("c_0", inputs.c0.clone());
        let c1 = put("c_1", inputs.c1.clone());
        let z = put("z", inputs.z.clone());
        let j0 = put("J_0", inputs.j0.clone());
        let (upper, lower) = match inputs.j_star {
            Some(j) => (
                Tagged::fitted(j, "optimal policy oracle"),
                Tagged::fitted(j, "optimal policy oracle"),
            ),
            None => (
                Tagged::derived(c_max, "surrogate: c_max >= J_star"),
                Tagged::derived(j0, "surrogate: J_0 <= J_star"),
            ),
        };
        let js_up = put("J_star_upper", upper);
        let js_low = put("J_star_lower", lower);
        let x_z = put("x_z", inputs.x_z.clone());
        let p_z = put("p_z", inputs.p_z.clone());

        let tau = put(
            "tau_bound",
            Tagged::derived(tau_bound(x_z, p_z, c_max, j0, z), "x_z (c_max - J_0) / (p_z^2 (J_0 - z)) + x_z"),
        );
        let c5l = put("c_5_lemma", Tagged::derived((js_up - z) / (j0 - z), "(J_star - z) / (J_0 - z)"));
        let c6l = put(
            "c_6_lemma",
            Tagged::derived(
                tau * (js_up - j0) * (c_max - z) * (js_up - z) / ((j0 - z) * (j0 - z)),
                "tau_bound (J_star - J_0) (c_max - z) (J_star - z) / (J_0 - z)^2",
            ),
        );
        put("c_7_lemma", Tagged::derived(tau * (c_max - j0), "tau_bound (c_max - J_0)"));
        let c2 = put("c_2", Tagged::derived(c0 * c5l * r3 * r3 + r1, "c_0 c_5 R_3^2 + R_1"));
        let c3 = put("c_3", Tagged::derived(2.0 * c0 * c5l * r3 * r4, "2 c_0 c_5 R_3 R_4"));
        let c4 = put(
            "c_4",
            Tagged::derived(
                c0 * c5l * r4 * r4 + c1 * c5l + 2.0 * c6l + r2,
                "c_0 c_5 R_4^2 + c_1 c_5 + c_6 + c_6 + R_2 (c_6 enters twice)",
            ),
        );
        let c5m = put("c_5_main", Tagged::derived(c2.sqrt() + c3.sqrt(), "sqrt(c_2) + sqrt(c_3)"));
        let c6m = put("c_6_main", Tagged::derived(c3.sqrt() / 4.0 + c4.sqrt(), "sqrt(c_3)/4 + sqrt(c_4)"));
        let m = inputs.action_count as f64;
        put(
            "c_star",
            Tagged::derived(
                m.ln().sqrt() * (c5m * (c_max - js_low) + c6m) + m.log2() / 2.0,
                "sqrt(ln|A|) (c_5 (c_max - J_star) + c_6) + log2(|A|)/2",
            ),
        );

        let ledger = ConstantsLedger { action_count: inputs.action_count, entries };
        ledger.validate()?;
        Ok(ledger)
    }

    pub fn validate(&self) -> Result<()> {
        let (r3, c0, c1, p_z, z, j0) =
            (self.get("R_3"), self.get("c_0"), self.get("c_1"), self.get("p_z"), self.get("z"), self.get("J_0"));
        if r3 < 1.0 {
            return Err(Error::InvalidLedger(format!("R_3 = {r3} < 1")));
        }
        if c0 <= 0.0 {
            return Err(Error::InvalidLedger(format!("c_0 = {c0} must be positive")));
        }
        if c1 < 0.0 {
            return Err(Error::InvalidLedger(format!("c_1 = {c1} is negative")));
        }
        if !(p_z > 0.0 && p_z <= 1.0) {
            return Err(Error::InvalidLedger(format!("p_z = {p_z} outside (0, 1]")));
        }
        if j0 - z < 1e-6 {
            return Err(Error::InvalidLedger(format!("z = {z} must be below J_0 = {j0} by at least 1e-6")));
        }
        // specific checks first: a bad z turns half the derived entries into NaN
        for e in &self.entries {
            if !e.value.is_finite() {
                return Err(Error::InvalidLedger(format!("{} = {} is not finite", e.name, e.value)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> f64 {
        self.entry(name).map(|e| e.value).unwrap_or(f64::NAN)
    }

    pub fn entry(&self, name: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn c_star(&self) -> f64 {
        self.get("c_star")
    }
}

impl fmt::Display for ConstantsLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>24}  {:<9} note", "name", "value", "tag")?;
        for e in &self.entries {
            writeln!(f, "{:<14} {:>24.17e}  {:<9} {}", e.name, e.value, e.provenance.to_string(), e.note)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn sample_inputs() -> LedgerInputs {
    LedgerInputs {
        action_count: 2,
        c_max: Tagged::derived(0.0, ""),
        r1: Tagged::supplied(0.0),
        r2: Tagged::supplied(0.0),
        r3: Tagged::supplied(1.0),
        r4: Tagged::supplied(1.0),
        c0: Tagged::fitted(2.0, ""),
        c1: Tagged::fitted(0.5, ""),
        z: Tagged::supplied(-2.0),
        j0: Tagged::supplied(-1.0),
        x_z: Tagged::supplied(2.0),
        p_z: Tagged::supplied(0.5),
        j_star: None,
    }
}
