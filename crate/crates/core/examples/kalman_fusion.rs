//! Fuse a point's per-step clean probabilities with the scalar Kalman
//! filter: a steady wall, a flickering false alarm and a ghost that the
//! classifier only recognises after a few steps.

use radar_pcd::rdm::{KalmanParams, ScalarKalman};

fn main() -> radar_pcd::error::Result<()> {
    let params = KalmanParams::default();
    params.validate()?;
    let histories: [(&str, Vec<f64>); 3] = [
        ("wall", vec![0.8, 0.7, 0.9, 0.85, 0.75, 0.9, 0.8, 0.85]),
        ("flicker", vec![0.9, 0.1, 0.2, 0.1, 0.15, 0.1, 0.2, 0.1]),
        ("ghost", vec![0.6, 0.55, 0.4, 0.3, 0.2, 0.2, 0.1, 0.1]),
    ];
    for (name, probs) in &histories {
        let mut filter = ScalarKalman::new(&params);
        let line: Vec<String> = probs
            .iter()
            .map(|&p| {
                filter.predict(params.q);
                filter.update(p, params.r);
                let mark = if filter.label() == 1 { "+" } else { "-" };
                format!("{p:.2}->{:.2}{mark}", filter.x)
            })
            .collect();
        println!("{name:>8}: {}", line.join(" "));
    }
    Ok(())
}
