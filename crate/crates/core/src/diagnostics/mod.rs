//! Generalization diagnostics computed on trained networks, and their CSV
//! forms.

pub mod flatness;
pub mod margins;
pub mod size;
pub mod speed;

use std::io::Write;

pub use flatness::{flatness_curve, FlatnessCurve, FlatnessDraw, FlatnessPoint};
pub use margins::{margins_of, softmax_margins, MarginReport, DEFAULT_SMALLEST};
pub use size::{frob_product, weight_size, WeightSizeReport};
pub use speed::{format_speed, round_speed};

use crate::error::Result;

/// `run_id,rank,margin`, rank 0 being the smallest margin.
pub fn write_margins<W: Write>(out: W, rows: &[(String, MarginReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "rank", "margin"])?;
    for (run_id, report) in rows {
        for (rank, g) in report.smallest().iter().enumerate() {
            w.write_record([run_id.as_str(), &rank.to_string(), &g.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `run_id,sigma,draw,delta_acc,delta_loss`.
pub fn write_flatness<W: Write>(out: W, rows: &[(String, FlatnessCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "sigma", "draw", "delta_acc", "delta_loss"])?;
    for (run_id, curve) in rows {
        for p in &curve.points {
            for (i, d) in p.draws.iter().enumerate() {
                w.write_record([
                    run_id.as_str(),
                    &p.sigma_noise.to_string(),
                    &i.to_string(),
                    &d.delta_acc.to_string(),
                    &d.delta_loss.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `run_id,frob_product,head_measure`.
pub fn write_weight_size<W: Write>(out: W, rows: &[(String, WeightSizeReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "frob_product", "head_measure"])?;
    for (run_id, r) in rows {
        w.write_record([run_id.as_str(), &r.frob_product.to_string(), &r.head_measure.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
