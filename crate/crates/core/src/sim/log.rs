//! Per-step trajectory record and its CSV form.

use std::io::Write;

use crate::learning::FEATURE_DIM;

const FIXED_COLUMNS: &[&str] = &[
    "t", "x_p1", "x_p2", "v_p1", "v_p2", "x_e1", "x_e2", "v_e1", "v_e2", "x_o1", "x_o2", "xi1",
    "xi2", "xi3", "xi4", "u_n1", "u_n2", "u_r1", "u_r2", "u_s1", "u_s2", "u_p1", "u_p2", "u_e1",
    "u_e2", "d1", "d2", "b_x", "b_v", "phi_x1", "s_norm", "smc_gain", "smc_mode", "u_r_norm",
    "u_s_norm", "gram_min_eig",
];

const TAIL_COLUMNS: &[&str] =
    &["delta", "lambda_min", "gamma_norm", "l2_lhs", "l2_rhs", "evader_energy"];

/// Column names in file order.
pub fn column_names() -> Vec<String> {
    let mut names: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for prefix in ["w_c", "w_a", "w_p"] {
        names.extend((1..=FEATURE_DIM).map(|k| format!("{prefix}{k}")));
    }
    names.extend(TAIL_COLUMNS.iter().map(|s| s.to_string()));
    names
}

pub fn column_count() -> usize {
    FIXED_COLUMNS.len() + 3 * FEATURE_DIM + TAIL_COLUMNS.len()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    rows: Vec<Vec<f64>>,
}

impl TrajectoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), column_count());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column_index(name: &str) -> Option<usize> {
        column_names().iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = Self::column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", column_names().join(","))?;
        for row in &self.rows {
            write_row(out, None, row)?;
        }
        Ok(())
    }
}

pub(crate) fn write_row<W: Write>(out: &mut W, prefix: Option<&str>, row: &[f64]) -> std::io::Result<()> {
    let mut line = String::with_capacity(row.len() * 14);
    if let Some(p) = prefix {
        line.push_str(p);
        line.push(',');
    }
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&format_sig9(*v));
    }
    writeln!(out, "{line}")
}

/// Decimal notation with nine significant digits.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can carry into a new leading digit (9.9999999996 -> 10.00000000).
    let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
    if digits > 9 && decimals > 0 {
        let d = decimals - 1;
        format!("{v:.d$}")
    } else {
        s
    }
}
