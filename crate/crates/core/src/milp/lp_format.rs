use std::io::Write;

use super::{MilpModel, Sense, VarKind};
use crate::error::Result;
use crate::scalar::Scalar;

/// Characters allowed in LP-format names besides ASCII letters and digits.
const NAME_EXTRA: &str = "!\"#$%&()/,.;?@_`'{}|~";

fn lp_name(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || NAME_EXTRA.contains(c) { c } else { '_' })
        .collect()
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn term(first: bool, coef: f64, name: &str) -> String {
    let sign = if coef < 0.0 { "-" } else { "+" };
    let mag = coef.abs();
    let body = if mag == 1.0 { name.to_string() } else { format!("{} {name}", num(mag)) };
    if first && coef >= 0.0 {
        body
    } else {
        format!("{sign} {body}")
    }
}

/// Writes the model in CPLEX LP text format. The objective constant is
/// recorded as a comment.
pub fn write_lp<T: Scalar, W: Write>(model: &MilpModel<T>, mut out: W) -> Result<()> {
    let names: Vec<String> = model.columns.iter().map(|c| lp_name(&c.name)).collect();
    writeln!(out, "\\ objective offset: {}", num(model.objective_offset.to_f64_lossy()))?;
    writeln!(out, "Minimize")?;
    let mut line = String::from(" obj:");
    let mut first = true;
    for (c, n) in model.columns.iter().zip(&names) {
        let a = c.cost.to_f64_lossy();
        if a != 0.0 {
            line.push(' ');
            line.push_str(&term(first, a, n));
            first = false;
        }
    }
    if first {
        line.push_str(" 0");
    }
    writeln!(out, "{line}")?;
    writeln!(out, "Subject To")?;
    for r in &model.rows {
        let mut line = format!(" {}:", lp_name(&r.name));
        for (i, (v, a)) in r.coefs.iter().enumerate() {
            line.push(' ');
            line.push_str(&term(i == 0, a.to_f64_lossy(), &names[v.0]));
        }
        if r.coefs.is_empty() {
            line.push_str(" 0");
        }
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        writeln!(out, "{line} {op} {}", num(r.rhs.to_f64_lossy()))?;
    }
    writeln!(out, "Bounds")?;
    for (c, n) in model.columns.iter().zip(&names) {
        let lo = c.lower.as_ref().map(|v| v.to_f64_lossy()).unwrap_or(f64::NEG_INFINITY);
        let hi = c.upper.as_ref().map(|v| v.to_f64_lossy()).unwrap_or(f64::INFINITY);
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            writeln!(out, " {n} free")?;
        } else if lo == hi {
            writeln!(out, " {n} = {}", num(lo))?;
        } else {
            writeln!(out, " {} <= {n} <= {}", num(lo), num(hi))?;
        }
    }
    let binaries: Vec<&String> = model
        .columns
        .iter()
        .zip(&names)
        .filter(|(c, _)| c.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        writeln!(out, "Binaries")?;
        for n in binaries {
            writeln!(out, " {n}")?;
        }
    }
    writeln!(out, "End")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{ColTag, Label, RowTag};

    #[test]
    fn small_model_text() {
        let mut m = MilpModel::<f64>::new();
        let x = m.add_continuous(Label::new(ColTag::GenDispatch, "u-1").hour(1), Some(0.0), Some(5.0), 2.0);
        let b = m.add_binary(Label::new(ColTag::ThermalCommit, "g").hour(1), -1.0);
        m.add_row(Label::new(RowTag::GenUpper, "u-1").hour(1), vec![(x, 1.0), (b, -5.0)], Sense::Le, 0.0);
        m.fix(b, 1.0);
        let mut buf = Vec::new();
        write_lp(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(" obj: 2 q_gen(u_1,t1) - u(g,t1)"), "{text}");
        assert!(text.contains(" gen_hi(u_1,t1): q_gen(u_1,t1) - 5 u(g,t1) <= 0"), "{text}");
        assert!(text.contains(" u(g,t1) = 1"), "{text}");
        assert!(text.contains("Binaries\n u(g,t1)\nEnd"), "{text}");
    }
}
