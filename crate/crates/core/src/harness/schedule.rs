use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::optim::NoiseSchedule;

/// `t,sigma` rows for `t = 0..t_max` of the annealed schedule.
pub fn schedule_dump(eta: f64, gamma: f64, t_max: u64) -> Result<String> {
    if t_max == 0 {
        return Err(Error::Argument("t_max must be at least 1".into()));
    }
    let schedule = NoiseSchedule::annealed(eta, gamma)?;
    let mut out = String::from("t,sigma\n");
    for t in 0..t_max {
        let _ = writeln!(out, "{t},{}", schedule.stddev(t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(csv: &str) -> Vec<(u64, f64)> {
        csv.lines()
            .skip(1)
            .map(|l| {
                let (t, s) = l.split_once(',').unwrap();
                (t.parse().unwrap(), s.parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn single_rows() {
        assert_eq!(rows(&schedule_dump(1.0, 0.55, 1).unwrap()), vec![(0, 1.0)]);
        let r = rows(&schedule_dump(0.01, 0.55, 1).unwrap());
        assert_eq!(r.len(), 1);
        assert!((r[0].1 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn row_999() {
        let r = rows(&schedule_dump(0.3, 0.55, 1000).unwrap());
        assert_eq!(r.len(), 1000);
        assert_eq!(r[999].0, 999);
        assert!((r[999].1 - 0.081_952_202_018_646_33).abs() < 1e-12);
        assert!(r.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(schedule_dump(1.0, 0.55, 0).is_err());
        assert!(schedule_dump(-1.0, 0.55, 3).is_err());
    }
}
