//! Built-in task library: plain matmul plus three threshold queries, each
//! with four threshold forms and four operand orientations.

use crate::error::{Error, Result};

pub const THRESHOLDS: [&str; 4] = ["c", "i", "j", "ij"];
pub const LAYOUTS: [&str; 4] = ["ab", "atb", "abt", "atbt"];

const HEADER: &str = "where(i in [0..M] and j in [0..N] and k in [0..K])";

fn threshold(form: &str) -> Option<&'static str> {
    Some(match form {
        "c" => "100",
        "i" => "thres[i]",
        "j" => "thres[j]",
        "ij" => "thres[i][j]",
        _ => return None,
    })
}

fn operands(layout: &str) -> Option<(&'static str, &'static str)> {
    Some(match layout {
        "ab" => ("A[i][k]", "B[k][j]"),
        "atb" => ("A[k][i]", "B[k][j]"),
        "abt" => ("A[i][k]", "B[j][k]"),
        "atbt" => ("A[k][i]", "B[j][k]"),
        _ => return None,
    })
}

fn query(n: u8, t: &str, a: &str, b: &str) -> String {
    let ab = format!("{a}*{b}");
    let body = match n {
        1 => format!("R[i][j] += {ab} - ({ab} > {t})*{ab}*dis[j];"),
        2 => format!("R[i][j] += {ab} + ({ab} > {t})*({ab} - {t});"),
        _ => format!("R[i][j] += ({ab} > {t});"),
    };
    format!("{HEADER} {{\n    {body}\n}}\n")
}

/// Source text for a preset. Names are `matmul[-LAYOUT]` or
/// `qN[-THRESHOLD][-LAYOUT]`; omitted parts default to `j`/`ab` for queries
/// 1 and 2 and to `c`/`ab` for query 3.
pub fn preset(name: &str) -> Result<String> {
    let unknown = || Error::InvalidArgument(format!("unknown preset `{name}`; try `matmul`, `q1-i-atb`, ..."));
    let mut parts = name.split('-');
    let head = parts.next().unwrap_or_default();
    let rest: Vec<&str> = parts.collect();
    if head == "matmul" {
        let layout = match rest.as_slice() {
            [] => "ab",
            [l] => l,
            _ => return Err(unknown()),
        };
        let (a, b) = operands(layout).ok_or_else(unknown)?;
        return Ok(format!("{HEADER} {{\n    R[i][j] += {a}*{b};\n}}\n"));
    }
    let n = match head {
        "q1" => 1,
        "q2" => 2,
        "q3" => 3,
        _ => return Err(unknown()),
    };
    let default_t = if n == 3 { "c" } else { "j" };
    let (t, layout) = match rest.as_slice() {
        [] => (default_t, "ab"),
        [x] if threshold(x).is_some() => (*x, "ab"),
        [x] => (default_t, *x),
        [t, l] => (*t, *l),
        _ => return Err(unknown()),
    };
    let (a, b) = operands(layout).ok_or_else(unknown)?;
    Ok(query(n, threshold(t).ok_or_else(unknown)?, a, b))
}

/// Every canonical preset name.
pub fn names() -> Vec<String> {
    let mut out: Vec<String> = LAYOUTS.iter().map(|l| format!("matmul-{l}")).collect();
    for q in 1..=3 {
        for t in THRESHOLDS {
            for l in LAYOUTS {
                out.push(format!("q{q}-{t}-{l}"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_task, recognize, LeafClass};

    #[test]
    fn every_preset_is_recognized() {
        let names = names();
        assert_eq!(names.len(), 4 + 48);
        for n in names {
            let t = parse_task(&preset(&n).unwrap()).unwrap();
            assert!(recognize(&t).mmlt().is_some(), "{n}");
        }
    }

    #[test]
    fn defaults_and_variants() {
        assert_eq!(preset("q1").unwrap(), preset("q1-j-ab").unwrap());
        assert_eq!(preset("q3").unwrap(), preset("q3-c-ab").unwrap());
        assert_eq!(preset("q2-atbt").unwrap(), preset("q2-j-atbt").unwrap());
        assert!(preset("q3-c-ab").unwrap().contains("> 100"));
        let info = recognize(&parse_task(&preset("q2-ij-abt").unwrap()).unwrap()).into_mmlt().unwrap();
        assert!(info.b.transposed && !info.a.transposed);
        assert_eq!(info.aux_class("thres"), Some(LeafClass::MatIJ));
    }

    #[test]
    fn unknown_names() {
        for bad in ["q4", "q1-x", "q1-i-ab-z", "matmul-ba", ""] {
            assert!(preset(bad).is_err(), "{bad}");
        }
    }
}
