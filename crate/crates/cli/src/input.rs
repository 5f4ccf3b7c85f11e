//! Parsers for the textual arguments that name strategies, adversaries and
//! windows.

use std::path::Path;

use lastarrival::sim::{AdversaryChoice, SelectorStrategy};
use lastarrival::{Error, Precision, ThresholdStrategy, Window};

pub fn window(s: &str) -> Result<Window, String> {
    if s.eq_ignore_ascii_case("exact") {
        return Ok(Window::Exact);
    }
    match s.parse::<usize>() {
        Ok(w) if w >= 1 => Ok(Window::Truncated(w)),
        _ => Err(format!("expected `exact` or a positive window size, got {s:?}")),
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))
}

/// `odds`, `half-observe`, or a JSON file holding a threshold strategy
/// (bare, or as the `result` of a `strategy --format json` report).
pub fn selector(prec: Precision, s: &str) -> Result<SelectorStrategy, Error> {
    match s {
        "odds" => return Ok(SelectorStrategy::Odds),
        "half-observe" | "half_observe" => return Ok(SelectorStrategy::HalfObserve),
        _ => {}
    }
    let text = read(Path::new(s))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{s}: {e}")))?;
    if let Some(inner) = value.get_mut("result") {
        value = inner.take();
    }
    let strategy: ThresholdStrategy =
        serde_json::from_value(value).map_err(|e| Error::Parse(format!("{s}: {e}")))?;
    Ok(SelectorStrategy::Threshold(strategy.with_precision(prec)))
}

/// `fixed:N`, `cat:FILE` (weights of n = 1, 2, ... separated by commas or
/// whitespace) or `poisson:LAMBDA`.
pub fn adversary(s: &str) -> Result<AdversaryChoice, Error> {
    let bad = || Error::Parse(format!("adversary {s:?}: expected fixed:N, cat:FILE or poisson:LAMBDA"));
    let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "fixed" => arg.trim().parse().map(|n| AdversaryChoice::Fixed { n }).map_err(|_| bad()),
        "poisson" => arg.trim().parse().map(|lambda| AdversaryChoice::Poisson { lambda }).map_err(|_| bad()),
        "cat" => {
            let text = read(Path::new(arg))?;
            let weights = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{arg}: {t:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AdversaryChoice::Categorical { weights })
        }
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows() {
        assert_eq!(window("exact"), Ok(Window::Exact));
        assert_eq!(window("24"), Ok(Window::Truncated(24)));
        assert!(window("0").is_err());
        assert!(window("wide").is_err());
    }

    #[test]
    fn adversaries() {
        assert_eq!(adversary("fixed:3").unwrap(), AdversaryChoice::Fixed { n: 3 });
        assert_eq!(adversary("poisson:2.5").unwrap(), AdversaryChoice::Poisson { lambda: 2.5 });
        assert!(adversary("fixed").is_err());
        assert!(adversary("uniform:3").is_err());
        assert!(adversary("cat:/nonexistent/weights").is_err());
    }

    #[test]
    fn categorical_file() {
        let path = std::env::temp_dir().join(format!("lastarrival-cat-{}.txt", std::process::id()));
        std::fs::write(&path, "0.25, 0.25\n0.5\n").unwrap();
        let got = adversary(&format!("cat:{}", path.display())).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(got, AdversaryChoice::Categorical { weights: vec![0.25, 0.25, 0.5] });
    }
}
