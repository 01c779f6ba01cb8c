//! Synthetic trial shaped like the ACTG175 extract: 316 control and 377
//! treated patients, 670 further patients coded 2 or 3 and held out of
//! sample, fifteen baseline covariates with a few missing cells.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spc_core::data::Schema;

pub const N_CONTROL: usize = 316;
pub const N_TREATED: usize = 377;
pub const N_HELD_OUT: usize = 670;

pub const COVARIATES: [&str; 15] = [
    "age", "wtkg", "hemo", "homo", "drugs", "karnof", "oprior", "z30", "preanti", "race", "gender", "str2", "symptom",
    "cd40", "cd80",
];

/// Columns with missing cells and their missing rate.
const MISSING: [(&str, f64); 3] = [("wtkg", 0.05), ("karnof", 0.04), ("cd80", 0.08)];

pub fn actg_schema() -> Schema {
    let mut s = Schema::new("arms", "cd420", COVARIATES.iter().map(|c| c.to_string()).collect());
    s.id = Some("pidnum".into());
    s.out_of_sample_code = vec!["2".into(), "3".into()];
    s.arm_codes = Some(vec!["0".into(), "1".into()]);
    s
}

pub fn actg_csv(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut codes: Vec<&str> = std::iter::repeat_n("0", N_CONTROL)
        .chain(std::iter::repeat_n("1", N_TREATED))
        .chain(std::iter::repeat_n("2", N_HELD_OUT / 2))
        .chain(std::iter::repeat_n("3", N_HELD_OUT - N_HELD_OUT / 2))
        .collect();
    codes.shuffle(&mut rng);

    let mut out = String::from("pidnum,arms,cd420,");
    out.push_str(&COVARIATES.join(","));
    out.push('\n');
    for (i, code) in codes.iter().enumerate() {
        let frailty: f64 = z.sample(&mut rng);
        let cd40 = 350.0 + 110.0 * (0.6 * frailty + 0.8 * z.sample(&mut rng));
        let cd80 = 980.0 + 450.0 * (0.3 * frailty + 0.95 * z.sample(&mut rng));
        let age = 35.0 + 8.5 * z.sample(&mut rng);
        let wtkg = 75.0 + 13.0 * z.sample(&mut rng) + 0.1 * (age - 35.0);
        let karnof = (95.0 + 5.0 * z.sample::<_>(&mut rng) + 2.0 * frailty)
            .clamp(70.0, 100.0)
            .round();
        let bin = |rng: &mut ChaCha8Rng, p: f64| f64::from(u8::from(rng.random::<f64>() < p));
        let values = [
            age.round(),
            wtkg,
            bin(&mut rng, 0.08),
            bin(&mut rng, 0.66),
            bin(&mut rng, 0.13),
            karnof,
            bin(&mut rng, 0.02),
            bin(&mut rng, 0.55),
            (380.0 + 200.0 * z.sample(&mut rng)).max(0.0).round(),
            bin(&mut rng, 0.29),
            bin(&mut rng, 0.17),
            bin(&mut rng, 0.58),
            bin(&mut rng, 0.17),
            cd40.round(),
            cd80.round(),
        ];
        let effect = match *code {
            "1" => 45.0 + 0.05 * (cd40 - 350.0),
            _ => 0.0,
        };
        let cd420 = 60.0 + 0.8 * cd40 + effect - 20.0 * values[12] + 95.0 * z.sample(&mut rng);
        let outcome = if matches!(*code, "0" | "1") {
            format!("{}", cd420.round())
        } else {
            String::new()
        };
        let cells: Vec<String> = COVARIATES
            .iter()
            .zip(values)
            .map(|(name, v)| match MISSING.iter().find(|(m, _)| m == name) {
                Some((_, rate)) if rng.random::<f64>() < *rate => "NA".to_string(),
                _ => format!("{v}"),
            })
            .collect();
        out.push_str(&format!("{},{code},{outcome},{}\n", 10000 + i, cells.join(",")));
    }
    out
}
