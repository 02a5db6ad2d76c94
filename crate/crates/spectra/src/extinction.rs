//! Built-in hemoglobin absorption table (see `data/hemoglobin.csv`).

use std::sync::OnceLock;

const TABLE: &str = include_str!("../data/hemoglobin.csv");

/// `ln(10) * 150 g/L / 64500 g/mol`: converts molar extinction of
/// hemoglobin to the absorption coefficient of whole blood in cm⁻¹.
pub const BLOOD_FACTOR: f64 = 2.303 * 150.0 / 64_500.0;

struct Table {
    nm: Vec<f64>,
    hbo2: Vec<f64>,
    hb: Vec<f64>,
}

fn table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    T.get_or_init(|| {
        let mut t = Table {
            nm: vec![],
            hbo2: vec![],
            hb: vec![],
        };
        for line in TABLE.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let v: Vec<f64> = line.split(',').map(|s| s.trim().parse().expect("numeric table")).collect();
            t.nm.push(v[0]);
            t.hbo2.push(v[1]);
            t.hb.push(v[2]);
        }
        t
    })
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
}

/// Whole-blood absorption `(μa_HbO2, μa_Hb)` in cm⁻¹ at `nm`, clamped to the table range.
pub fn blood_absorption(nm: f64) -> (f64, f64) {
    let t = table();
    (
        interp(&t.nm, &t.hbo2, nm) * BLOOD_FACTOR,
        interp(&t.nm, &t.hb, nm) * BLOOD_FACTOR,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_parses_and_interpolates() {
        let t = table();
        assert_eq!(t.nm.len(), t.hb.len());
        assert!(t.nm.windows(2).all(|w| w[1] > w[0]));
        let (o, d) = blood_absorption(505.0);
        assert!((o - (20932.0 + 20035.0) / 2.0 * BLOOD_FACTOR).abs() < 1e-9);
        assert!(d > 0.0);
        assert_eq!(blood_absorption(10.0), blood_absorption(450.0));
    }

    #[test]
    fn isosbestic_region_near_800nm() {
        let (o, d) = blood_absorption(800.0);
        assert!((o - d).abs() / o < 0.1);
    }
}
