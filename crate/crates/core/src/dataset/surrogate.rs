//! Stand-in generators for the UCI Heart Disease (four hospitals) and
//! Student Performance (two schools) files.
//!
//! The real files cannot be redistributed with the crate. These generators
//! emit CSV text with the same header, cell formats, missing-value markers
//! and group column as the normalized real files, with per-site marginals set
//! to rough per-site summary statistics of the originals. Features are drawn
//! independently given (site, class), so cross-feature correlations of the
//! real data are not reproduced. Use them to exercise the pipeline end to
//! end; they are not a replacement for the real data.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::rng::{rng_from_seed, Rng};

fn categorical(rng: &mut Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

fn bernoulli(rng: &mut Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn normal(rng: &mut Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).unwrap().sample(rng)
}

fn rounded(rng: &mut Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> i64 {
    normal(rng, mean, sd).round().clamp(lo, hi) as i64
}

struct HeartClass {
    age: (f64, f64),
    male: f64,
    cp: [f64; 4],
    trestbps: (f64, f64),
    /// `None` encodes the all-zero cholesterol column of the Swiss site.
    chol: Option<(f64, f64)>,
    chol_zero: f64,
    fbs: f64,
    restecg: [f64; 3],
    thalach: (f64, f64),
    exang: f64,
    oldpeak: (f64, f64),
}

struct Hospital {
    code: &'static str,
    rows: usize,
    prevalence: f64,
    healthy: HeartClass,
    disease: HeartClass,
    /// Probability that the exercise-test block (trestbps..oldpeak) is missing.
    missing_exercise: f64,
    missing_fbs: f64,
    has_slope_ca_thal: bool,
}

fn hospitals() -> Vec<Hospital> {
    vec![
        Hospital {
            code: "CL",
            rows: 303,
            prevalence: 0.46,
            healthy: HeartClass {
                age: (52.6, 9.5),
                male: 0.56,
                cp: [0.16, 0.27, 0.41, 0.16],
                trestbps: (129.0, 16.2),
                chol: Some((242.0, 53.0)),
                chol_zero: 0.0,
                fbs: 0.14,
                restecg: [0.57, 0.01, 0.42],
                thalach: (158.0, 19.0),
                exang: 0.14,
                oldpeak: (0.59, 0.78),
            },
            disease: HeartClass {
                age: (56.6, 7.9),
                male: 0.82,
                cp: [0.05, 0.07, 0.13, 0.75],
                trestbps: (134.0, 18.7),
                chol: Some((251.0, 49.0)),
                chol_zero: 0.0,
                fbs: 0.16,
                restecg: [0.44, 0.02, 0.54],
                thalach: (139.0, 22.7),
                exang: 0.55,
                oldpeak: (1.57, 1.3),
            },
            missing_exercise: 0.0,
            missing_fbs: 0.0,
            has_slope_ca_thal: true,
        },
        Hospital {
            code: "HU",
            rows: 294,
            prevalence: 0.36,
            healthy: HeartClass {
                age: (47.0, 7.9),
                male: 0.63,
                cp: [0.05, 0.48, 0.24, 0.23],
                trestbps: (130.0, 16.0),
                chol: Some((240.0, 60.0)),
                chol_zero: 0.0,
                fbs: 0.05,
                restecg: [0.83, 0.15, 0.02],
                thalach: (145.0, 21.0),
                exang: 0.12,
                oldpeak: (0.2, 0.5),
            },
            disease: HeartClass {
                age: (49.5, 7.3),
                male: 0.87,
                cp: [0.02, 0.10, 0.10, 0.78],
                trestbps: (136.0, 19.0),
                chol: Some((268.0, 75.0)),
                chol_zero: 0.0,
                fbs: 0.10,
                restecg: [0.74, 0.23, 0.03],
                thalach: (129.0, 24.0),
                exang: 0.63,
                oldpeak: (1.3, 1.0),
            },
            missing_exercise: 0.003,
            missing_fbs: 0.03,
            has_slope_ca_thal: false,
        },
        Hospital {
            code: "CH",
            rows: 123,
            prevalence: 0.93,
            healthy: HeartClass {
                age: (51.0, 10.0),
                male: 0.62,
                cp: [0.13, 0.25, 0.25, 0.37],
                trestbps: (125.0, 20.0),
                chol: None,
                chol_zero: 1.0,
                fbs: 0.0,
                restecg: [0.8, 0.2, 0.0],
                thalach: (140.0, 22.0),
                exang: 0.1,
                oldpeak: (0.2, 0.5),
            },
            disease: HeartClass {
                age: (55.5, 9.0),
                male: 0.94,
                cp: [0.02, 0.02, 0.13, 0.83],
                trestbps: (131.0, 23.0),
                chol: None,
                chol_zero: 1.0,
                fbs: 0.2,
                restecg: [0.68, 0.25, 0.07],
                thalach: (120.0, 25.0),
                exang: 0.47,
                oldpeak: (0.7, 1.0),
            },
            missing_exercise: 0.01,
            missing_fbs: 0.6,
            has_slope_ca_thal: false,
        },
        Hospital {
            code: "VA",
            rows: 200,
            prevalence: 0.745,
            healthy: HeartClass {
                age: (57.0, 8.0),
                male: 0.94,
                cp: [0.06, 0.12, 0.35, 0.47],
                trestbps: (130.0, 18.0),
                chol: Some((240.0, 60.0)),
                chol_zero: 0.25,
                fbs: 0.3,
                restecg: [0.4, 0.45, 0.15],
                thalach: (128.0, 22.0),
                exang: 0.35,
                oldpeak: (0.8, 0.9),
            },
            disease: HeartClass {
                age: (60.0, 7.5),
                male: 0.98,
                cp: [0.02, 0.05, 0.2, 0.73],
                trestbps: (135.0, 22.0),
                chol: Some((230.0, 65.0)),
                chol_zero: 0.25,
                fbs: 0.37,
                restecg: [0.4, 0.47, 0.13],
                thalach: (121.0, 21.0),
                exang: 0.75,
                oldpeak: (1.5, 1.1),
            },
            missing_exercise: 0.28,
            missing_fbs: 0.035,
            has_slope_ca_thal: false,
        },
    ]
}

pub const HEART_HEADER: &str =
    "age,sex,cp,trestbps,chol,fbs,restecg,thalach,exang,oldpeak,slope,ca,thal,num,hospital";

/// Heart-Disease-shaped CSV: 920 rows over hospitals CL, HU, CH, VA, `?` for
/// missing cells, `num` ∈ 0..=4 (0 = no disease).
pub fn heart_csv(seed: u64) -> String {
    let mut rng = rng_from_seed(seed);
    let mut out = String::from(HEART_HEADER);
    out.push('\n');
    for h in hospitals() {
        for _ in 0..h.rows {
            let disease = bernoulli(&mut rng, h.prevalence);
            let c = if disease { &h.disease } else { &h.healthy };
            let age = rounded(&mut rng, c.age.0, c.age.1, 28.0, 77.0);
            let sex = bernoulli(&mut rng, c.male) as u8;
            let cp = categorical(&mut rng, &c.cp) + 1;
            let trestbps = rounded(&mut rng, c.trestbps.0, c.trestbps.1, 80.0, 200.0);
            let chol = match c.chol {
                Some(_) if bernoulli(&mut rng, c.chol_zero) => 0,
                Some((m, s)) => rounded(&mut rng, m, s, 85.0, 603.0),
                None => 0,
            };
            let fbs = bernoulli(&mut rng, c.fbs) as u8;
            let restecg = categorical(&mut rng, &c.restecg);
            let thalach = rounded(&mut rng, c.thalach.0, c.thalach.1, 60.0, 202.0);
            let exang = bernoulli(&mut rng, c.exang) as u8;
            let oldpeak =
                (normal(&mut rng, c.oldpeak.0, c.oldpeak.1).max(-1.0) * 10.0).round() / 10.0;
            let num = if disease {
                1 + categorical(&mut rng, &[0.4, 0.25, 0.25, 0.1])
            } else {
                0
            };

            let exercise_missing = bernoulli(&mut rng, h.missing_exercise);
            let fbs_missing = bernoulli(&mut rng, h.missing_fbs);
            let q = |missing: bool, v: String| if missing { "?".to_string() } else { v };
            let (slope, ca, thal) = if h.has_slope_ca_thal {
                let slope = 1 + categorical(
                    &mut rng,
                    if disease {
                        &[0.3, 0.6, 0.1]
                    } else {
                        &[0.65, 0.3, 0.05]
                    },
                );
                let ca = categorical(
                    &mut rng,
                    if disease {
                        &[0.3, 0.3, 0.25, 0.15]
                    } else {
                        &[0.8, 0.13, 0.05, 0.02]
                    },
                );
                let thal = [3, 6, 7][categorical(
                    &mut rng,
                    if disease {
                        &[0.25, 0.08, 0.67]
                    } else {
                        &[0.79, 0.04, 0.17]
                    },
                )];
                (slope.to_string(), ca.to_string(), thal.to_string())
            } else {
                ("?".into(), "?".into(), "?".into())
            };
            let cells = [
                age.to_string(),
                sex.to_string(),
                cp.to_string(),
                q(exercise_missing, trestbps.to_string()),
                chol.to_string(),
                q(fbs_missing, fbs.to_string()),
                restecg.to_string(),
                q(exercise_missing, thalach.to_string()),
                q(exercise_missing, exang.to_string()),
                q(exercise_missing, format!("{oldpeak}")),
                slope,
                ca,
                thal,
                num.to_string(),
                h.code.to_string(),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

struct School {
    code: &'static str,
    rows: usize,
    female: f64,
    age: (f64, f64),
    urban: f64,
    medu: [f64; 5],
    fedu: [f64; 5],
    mjob: [f64; 5],
    fjob: [f64; 5],
    reason: [f64; 4],
    guardian: [f64; 3],
    traveltime: [f64; 4],
    studytime: [f64; 4],
    failures: [f64; 4],
    schoolsup: f64,
    famsup: f64,
    paid: f64,
    activities: f64,
    higher: f64,
    internet: f64,
    absences_mean: f64,
    grade_base: f64,
    dropout: f64,
}

fn schools() -> [School; 2] {
    [
        School {
            code: "GP",
            rows: 423,
            female: 0.58,
            age: (16.6, 1.2),
            urban: 0.83,
            medu: [0.01, 0.18, 0.27, 0.22, 0.32],
            fedu: [0.01, 0.20, 0.30, 0.22, 0.27],
            mjob: [0.18, 0.08, 0.38, 0.22, 0.14],
            fjob: [0.06, 0.04, 0.55, 0.28, 0.07],
            reason: [0.40, 0.24, 0.08, 0.28],
            guardian: [0.24, 0.70, 0.06],
            traveltime: [0.65, 0.28, 0.05, 0.02],
            studytime: [0.30, 0.48, 0.15, 0.07],
            failures: [0.88, 0.08, 0.02, 0.02],
            schoolsup: 0.13,
            famsup: 0.62,
            paid: 0.07,
            activities: 0.52,
            higher: 0.92,
            internet: 0.80,
            absences_mean: 4.0,
            grade_base: 13.0,
            dropout: 0.02,
        },
        School {
            code: "MS",
            rows: 226,
            female: 0.62,
            age: (17.1, 1.2),
            urban: 0.48,
            medu: [0.01, 0.28, 0.33, 0.20, 0.18],
            fedu: [0.01, 0.30, 0.33, 0.20, 0.16],
            mjob: [0.26, 0.06, 0.42, 0.18, 0.08],
            fjob: [0.07, 0.03, 0.58, 0.28, 0.04],
            reason: [0.50, 0.18, 0.18, 0.14],
            guardian: [0.24, 0.67, 0.09],
            traveltime: [0.38, 0.42, 0.14, 0.06],
            studytime: [0.38, 0.46, 0.12, 0.04],
            failures: [0.75, 0.15, 0.05, 0.05],
            schoolsup: 0.04,
            famsup: 0.58,
            paid: 0.04,
            activities: 0.40,
            higher: 0.83,
            internet: 0.67,
            absences_mean: 2.6,
            grade_base: 11.2,
            dropout: 0.05,
        },
    ]
}

pub const STUDENTS_HEADER: &str = "school;sex;age;address;famsize;Pstatus;Medu;Fedu;Mjob;Fjob;reason;guardian;traveltime;studytime;failures;schoolsup;famsup;paid;activities;nursery;higher;internet;romantic;famrel;freetime;goout;Dalc;Walc;health;absences;G1;G2;G3";

/// Student-Performance-shaped CSV: 649 rows, `;`-delimited with quoted
/// strings, schools GP and MS, grades G1..G3 on 0..=20.
pub fn students_csv(seed: u64) -> String {
    const JOBS: [&str; 5] = ["at_home", "health", "other", "services", "teacher"];
    const REASONS: [&str; 4] = ["course", "home", "other", "reputation"];
    const GUARDIANS: [&str; 3] = ["father", "mother", "other"];
    let yes_no = |b: bool| if b { "\"yes\"" } else { "\"no\"" };

    let mut rng = rng_from_seed(seed);
    let mut out = String::from(STUDENTS_HEADER);
    out.push('\n');
    for s in schools() {
        for _ in 0..s.rows {
            let female = bernoulli(&mut rng, s.female);
            let age = rounded(&mut rng, s.age.0, s.age.1, 15.0, 22.0);
            let urban = bernoulli(&mut rng, s.urban);
            let gt3 = bernoulli(&mut rng, 0.70);
            let together = bernoulli(&mut rng, 0.88);
            let medu = categorical(&mut rng, &s.medu);
            let fedu = categorical(&mut rng, &s.fedu);
            let mjob = JOBS[categorical(&mut rng, &s.mjob)];
            let fjob = JOBS[categorical(&mut rng, &s.fjob)];
            let reason = REASONS[categorical(&mut rng, &s.reason)];
            let guardian = GUARDIANS[categorical(&mut rng, &s.guardian)];
            let traveltime = 1 + categorical(&mut rng, &s.traveltime);
            let studytime = 1 + categorical(&mut rng, &s.studytime);
            let failures = categorical(&mut rng, &s.failures);
            let schoolsup = bernoulli(&mut rng, s.schoolsup);
            let famsup = bernoulli(&mut rng, s.famsup);
            let paid = bernoulli(&mut rng, s.paid);
            let activities = bernoulli(&mut rng, s.activities);
            let nursery = bernoulli(&mut rng, 0.80);
            let higher = bernoulli(&mut rng, s.higher);
            let internet = bernoulli(&mut rng, s.internet);
            let romantic = bernoulli(&mut rng, 0.37);
            let famrel = 1 + categorical(&mut rng, &[0.03, 0.05, 0.16, 0.49, 0.27]);
            let freetime = 1 + categorical(&mut rng, &[0.07, 0.16, 0.39, 0.27, 0.11]);
            let goout = 1 + categorical(&mut rng, &[0.07, 0.22, 0.32, 0.22, 0.17]);
            let dalc = 1 + categorical(&mut rng, &[0.69, 0.19, 0.07, 0.03, 0.02]);
            let walc = 1 + categorical(&mut rng, &[0.38, 0.23, 0.19, 0.13, 0.07]);
            let health = 1 + categorical(&mut rng, &[0.14, 0.12, 0.19, 0.17, 0.38]);
            let u: f64 = rng.random::<f64>();
            let absences = (-(1.0 - u).ln() * s.absences_mean).round().min(32.0) as i64;

            let latent = s.grade_base - 2.0 * failures as f64
                + 0.6 * (studytime as f64 - 2.0)
                + if higher { 0.0 } else { -2.0 }
                + 0.3 * (medu as f64 - 2.0)
                - 0.3 * (dalc as f64 - 1.0)
                - 0.05 * absences as f64
                + normal(&mut rng, 0.0, 2.6);
            let g3 = if bernoulli(&mut rng, s.dropout) {
                0
            } else {
                latent.round().clamp(0.0, 19.0) as i64
            };
            let g2 = (g3 as f64 + normal(&mut rng, 0.0, 1.0))
                .round()
                .clamp(0.0, 19.0) as i64;
            let g1 = (g3 as f64 + normal(&mut rng, -0.3, 1.4))
                .round()
                .clamp(0.0, 19.0) as i64;

            let cells = [
                format!("\"{}\"", s.code),
                format!("\"{}\"", if female { "F" } else { "M" }),
                age.to_string(),
                format!("\"{}\"", if urban { "U" } else { "R" }),
                format!("\"{}\"", if gt3 { "GT3" } else { "LE3" }),
                format!("\"{}\"", if together { "T" } else { "A" }),
                medu.to_string(),
                fedu.to_string(),
                format!("\"{mjob}\""),
                format!("\"{fjob}\""),
                format!("\"{reason}\""),
                format!("\"{guardian}\""),
                traveltime.to_string(),
                studytime.to_string(),
                failures.to_string(),
                yes_no(schoolsup).into(),
                yes_no(famsup).into(),
                yes_no(paid).into(),
                yes_no(activities).into(),
                yes_no(nursery).into(),
                yes_no(higher).into(),
                yes_no(internet).into(),
                yes_no(romantic).into(),
                famrel.to_string(),
                freetime.to_string(),
                goout.to_string(),
                dalc.to_string(),
                walc.to_string(),
                health.to_string(),
                absences.to_string(),
                format!("\"{g1}\""),
                format!("\"{g2}\""),
                g3.to_string(),
            ];
            out.push_str(&cells.join(";"));
            out.push('\n');
        }
    }
    out
}
