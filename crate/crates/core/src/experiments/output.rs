//! CSV writers. Every file starts with `# config_hash=<hex>` and a header
//! row; reals are written with 9 significant digits.

use std::io::{self, Write};

use super::{ConvergenceStudy, ReplicationSummary, SweepResult, Timeplot};
use crate::equilibrium::EquilibriumPoint;
use crate::fluid::Trajectory;
use crate::packet_sim::SimTrace;

pub const TRAJECTORY_HEADER: &str = "t,W,Z,q,Q,p,rho";
pub const TRACE_HEADER: &str = "t,flow_id,kind,cwnd,queue_pkts,ewma_pkts";
pub const SUMMARY_HEADER: &str =
    "scenario_hash,seed,rho_emp,goodput_tcp_pps,goodput_ledbat_pps,drop_rate";
pub const EQUILIBRIUM_HEADER: &str =
    "q_star,p_star,W_star,Z_star,rho_star,regime,exists,rho_refined";
pub const CONVERGENCE_HEADER: &str = "start,t,err_W,err_Z,err_q,d_rho";
pub const CONVERGENCE_STARTS_HEADER: &str = "start,W0,Z0,q0,settled,W_end,Z_end,q_end";

/// Format with 9 significant digits, plain notation where reasonable.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_owned()
        } else if x > 0.0 {
            "inf".to_owned()
        } else {
            "-inf".to_owned()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

pub fn write_preamble<W: Write>(w: &mut W, config_hash: &str, header: &str) -> io::Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "{header}")
}

pub fn write_trajectory<W: Write>(w: &mut W, hash: &str, traj: &Trajectory) -> io::Result<()> {
    write_preamble(w, hash, TRAJECTORY_HEADER)?;
    for i in 0..traj.len() {
        let s = &traj.states[i];
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_real(traj.times[i]),
            fmt_real(s.w_packets),
            fmt_real(s.z_packets),
            fmt_real(s.q_packets),
            fmt_real(s.q_avg_packets),
            fmt_real(traj.p[i]),
            fmt_real(traj.rho[i]),
        )?;
    }
    Ok(())
}

pub fn write_trace<W: Write>(w: &mut W, hash: &str, trace: &SimTrace) -> io::Result<()> {
    write_preamble(w, hash, TRACE_HEADER)?;
    for s in &trace.samples {
        let t = fmt_real(s.t);
        let ewma = fmt_real(s.ewma_packets);
        for (id, f) in s.flows.iter().enumerate() {
            writeln!(
                w,
                "{t},{id},{},{},{},{ewma}",
                trace.kinds[id].as_str(),
                fmt_real(f.cwnd_packets),
                s.queue_packets,
            )?;
        }
    }
    Ok(())
}

pub fn write_summaries<'a, W: Write>(
    w: &mut W,
    hash: &str,
    runs: impl IntoIterator<Item = &'a ReplicationSummary>,
) -> io::Result<()> {
    write_preamble(w, hash, SUMMARY_HEADER)?;
    for r in runs {
        let s = &r.summary;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.scenario_hash,
            r.seed,
            fmt_real(s.rho_emp),
            fmt_real(s.goodput_tcp_pps),
            fmt_real(s.goodput_ledbat_pps),
            fmt_real(s.drop_rate),
        )?;
    }
    Ok(())
}

fn equilibrium_fields(eq: &EquilibriumPoint, rho_refined: f64) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        fmt_real(eq.q_star_packets),
        fmt_real(eq.p_star),
        fmt_real(eq.w_star_packets),
        fmt_real(eq.z_star_packets),
        fmt_real(eq.rho_star),
        eq.regime.as_str(),
        eq.exists,
        fmt_real(rho_refined),
    )
}

pub fn write_equilibrium<W: Write>(
    w: &mut W,
    hash: &str,
    eq: &EquilibriumPoint,
    rho_refined: f64,
) -> io::Result<()> {
    write_preamble(w, hash, EQUILIBRIUM_HEADER)?;
    writeln!(w, "{}", equilibrium_fields(eq, rho_refined))
}

/// Sweep rows; the empirical columns appear when the first row has them.
pub fn write_sweep<W: Write>(w: &mut W, hash: &str, result: &SweepResult) -> io::Result<()> {
    let empirical = result.rows.first().is_some_and(|r| r.empirical.is_some());
    let mut header = format!("{},tau_over_min_th,{EQUILIBRIUM_HEADER}", result.axis);
    if empirical {
        header.push_str(",rho_emp_mean,rho_emp_std,reps");
    }
    write_preamble(w, hash, &header)?;
    for row in &result.rows {
        write!(
            w,
            "{},{},{}",
            fmt_real(row.value),
            fmt_real(row.tau_over_min_th),
            equilibrium_fields(&row.equilibrium, row.rho_refined)
        )?;
        if let Some(e) = &row.empirical {
            let std = e.std_dev.map(fmt_real).unwrap_or_default();
            write!(w, ",{},{std},{}", fmt_real(e.mean), e.runs.len())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_convergence<W: Write>(
    w: &mut W,
    hash: &str,
    study: &ConvergenceStudy,
) -> io::Result<()> {
    write_preamble(w, hash, CONVERGENCE_HEADER)?;
    for (i, run) in study.runs.iter().enumerate() {
        for e in &run.series {
            writeln!(
                w,
                "{i},{},{},{},{},{}",
                fmt_real(e.t),
                fmt_real(e.err_w),
                fmt_real(e.err_z),
                fmt_real(e.err_q),
                fmt_real(e.d_rho),
            )?;
        }
    }
    Ok(())
}

pub fn write_convergence_starts<W: Write>(
    w: &mut W,
    hash: &str,
    study: &ConvergenceStudy,
) -> io::Result<()> {
    write_preamble(w, hash, CONVERGENCE_STARTS_HEADER)?;
    for (i, run) in study.runs.iter().enumerate() {
        let (a, b) = (&run.initial, &run.final_state);
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{}",
            fmt_real(a.w_packets),
            fmt_real(a.z_packets),
            fmt_real(a.q_packets),
            run.settled,
            fmt_real(b.w_packets),
            fmt_real(b.z_packets),
            fmt_real(b.q_packets),
        )?;
    }
    Ok(())
}

/// Fluid and packet-level series of a time plot, as two files' contents.
pub fn write_timeplot<W1: Write, W2: Write>(
    fluid: &mut W1,
    trace: &mut W2,
    hash: &str,
    plot: &Timeplot,
) -> io::Result<()> {
    write_trajectory(fluid, hash, &plot.fluid)?;
    write_trace(trace, hash, &plot.sim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_real(0.0), "0");
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(0.1), "0.1");
        assert_eq!(fmt_real(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_real(123456.789012), "123456.789");
        assert_eq!(fmt_real(-2.5), "-2.5");
        assert_eq!(fmt_real(1e-7), "1e-7");
        assert_eq!(fmt_real(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_real(0.000123456789123), "0.000123456789");
        assert_eq!(fmt_real(999999999.6), "1e9");
        assert_eq!(fmt_real(f64::INFINITY), "inf");
    }

    #[test]
    fn round_trips_within_precision() {
        for &x in &[std::f64::consts::PI, 1e-4 / 7.0, 12345.678901, 5.5e10] {
            let back: f64 = fmt_real(x).parse().unwrap();
            assert!((back - x).abs() <= x.abs() * 5e-9, "{x}");
        }
    }
}
