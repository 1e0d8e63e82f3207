//! Browser bindings for a few nomasim experiments. Every entry point returns
//! a JSON string that `www/app.js` plots on a canvas.

use nomasim_core::bounds::{self, RateQuery};
use nomasim_core::sysmodel::{self, TrafficModel};
use nomasim_core::{from_db, macsim};
use serde::Serialize;
use wasm_bindgen::prelude::*;

// keeps a page interaction under a second or so
const MAX_TRIALS: u64 = 200_000;
const MAX_SLOTS: u64 = 100_000;

#[derive(Serialize)]
struct Series {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize)]
struct Plot {
    x_label: &'static str,
    y_label: &'static str,
    log_y: bool,
    series: Vec<Series>,
}

fn to_json(p: &Plot) -> String {
    serde_json::to_string(p).expect("plot serializes")
}

fn parse_counts(list: &str) -> Result<Vec<usize>, String> {
    list.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad user count {s:?}")))
        .filter(|r| !matches!(r, Ok(0)))
        .collect()
}

fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0 && hi >= lo) {
        return Err("grid needs step > 0 and hi >= lo".into());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

/// Individual outage vs total SNR (dB) for each user count in `users`
/// (comma separated), equal rates and equal power.
pub fn outage_curves_json(
    users: &str,
    sum_rate: f64,
    snr_lo: f64,
    snr_hi: f64,
    snr_step: f64,
    trials: u64,
    seed: u64,
) -> Result<String, String> {
    let counts = parse_counts(users)?;
    let snr = grid(snr_lo, snr_hi, snr_step)?;
    let curves = macsim::op_curve(&counts, sum_rate, &snr, trials.min(MAX_TRIALS), seed).map_err(|e| e.to_string())?;
    Ok(to_json(&Plot {
        x_label: "total SNR (dB)",
        y_label: "individual outage",
        log_y: true,
        series: curves
            .into_iter()
            .map(|c| Series {
                label: format!("K = {}", c.users),
                x: c.points.iter().map(|p| p.x).collect(),
                y: c.points.iter().map(|p| p.p_hat).collect(),
            })
            .collect(),
    }))
}

/// Normal-approximation rate and capacity vs blocklength at one SNR.
pub fn rate_vs_blocklength_json(snr_db: f64, eps: f64, n_max: u64) -> Result<String, String> {
    if n_max < 10 {
        return Err("n_max must be at least 10".into());
    }
    let ns: Vec<u64> = (0..=60)
        .map(|i| (10f64 * (n_max as f64 / 10.0).powf(i as f64 / 60.0)).round() as u64)
        .collect();
    let mut rate = Vec::with_capacity(ns.len());
    let mut cap = Vec::with_capacity(ns.len());
    for &n in &ns {
        let q = RateQuery::new(from_db(snr_db), n, eps).map_err(|e| e.to_string())?;
        let p = bounds::normal_approx_rate(&q).map_err(|e| e.to_string())?;
        rate.push(p.rate);
        cap.push(p.capacity);
    }
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    Ok(to_json(&Plot {
        x_label: "blocklength n (log scale)",
        y_label: "rate (bit per channel use)",
        log_y: false,
        series: vec![
            Series { label: "capacity".into(), x: x.clone(), y: cap },
            Series { label: format!("normal approximation, eps = {eps}"), x, y: rate },
        ],
    }))
}

/// Simulated and predicted slot collision rate vs signature pool size.
pub fn aloha_collisions_json(devices: u64, activation_prob: f64, slots: u64, seed: u64) -> Result<String, String> {
    let traffic = TrafficModel::new(devices, activation_prob, 100).map_err(|e| e.to_string())?;
    let pools: Vec<usize> = (1..=10).map(|i| 1usize << i).collect();
    let mut sim = Vec::new();
    let mut pred = Vec::new();
    for (i, &m) in pools.iter().enumerate() {
        let reports = sysmodel::run_aloha_frame(&traffic, m, slots.min(MAX_SLOTS), seed.wrapping_add(i as u64))
            .map_err(|e| e.to_string())?;
        let s = sysmodel::summarize(&traffic, m, &reports).map_err(|e| e.to_string())?;
        sim.push(s.collision_rate);
        pred.push(s.predicted_collision_rate);
    }
    let x: Vec<f64> = pools.iter().map(|&m| m as f64).collect();
    Ok(to_json(&Plot {
        x_label: "signature pool size (log scale)",
        y_label: "fraction of slots with a collision",
        log_y: false,
        series: vec![
            Series { label: "simulated".into(), x: x.clone(), y: sim },
            Series { label: "predicted".into(), x, y: pred },
        ],
    }))
}

#[wasm_bindgen]
pub fn outage_curves(
    users: &str,
    sum_rate: f64,
    snr_lo: f64,
    snr_hi: f64,
    snr_step: f64,
    trials: u32,
    seed: u32,
) -> Result<String, JsError> {
    outage_curves_json(users, sum_rate, snr_lo, snr_hi, snr_step, trials as u64, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rate_vs_blocklength(snr_db: f64, eps: f64, n_max: u32) -> Result<String, JsError> {
    rate_vs_blocklength_json(snr_db, eps, n_max as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn aloha_collisions(devices: u32, activation_prob: f64, slots: u32, seed: u32) -> Result<String, JsError> {
    aloha_collisions_json(devices as u64, activation_prob, slots as u64, seed as u64).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn outage_series_per_user_count() {
        let v = parse(&outage_curves_json("1, 4", 3.0, 0.0, 40.0, 10.0, 2_000, 1).unwrap());
        let s = v["series"].as_array().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1]["label"], "K = 4");
        assert_eq!(s[0]["x"].as_array().unwrap().len(), 5);
        let y: Vec<f64> = s[0]["y"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!(y.windows(2).all(|w| w[1] <= w[0]));
        assert!(outage_curves_json("2,x", 3.0, 0.0, 10.0, 1.0, 10, 1).is_err());
        assert!(outage_curves_json("2", 3.0, 10.0, 0.0, 1.0, 10, 1).is_err());
    }

    #[test]
    fn rate_approaches_capacity() {
        let v = parse(&rate_vs_blocklength_json(10.0, 1e-3, 100_000).unwrap());
        let cap = v["series"][0]["y"][0].as_f64().unwrap();
        let rate: Vec<f64> = v["series"][1]["y"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!(rate.windows(2).all(|w| w[1] >= w[0]));
        assert!(*rate.last().unwrap() < cap && cap - rate.last().unwrap() < 0.05);
        assert_eq!(v["series"][1]["x"].as_array().unwrap().last().unwrap().as_f64(), Some(100_000.0));
        assert!(rate_vs_blocklength_json(10.0, 2.0, 1000).is_err());
    }

    #[test]
    fn collisions_fall_with_pool_size() {
        let v = parse(&aloha_collisions_json(500, 0.01, 2_000, 3).unwrap());
        let pred: Vec<f64> = v["series"][1]["y"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!(pred.windows(2).all(|w| w[1] <= w[0]));
        let sim = v["series"][0]["y"][9].as_f64().unwrap();
        assert!((sim - pred[9]).abs() < 0.02);
        assert!(aloha_collisions_json(10, 1.5, 10, 0).is_err());
    }
}
