use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use qglauber_core::channels::{
    build_classical_transition, build_kraus, build_x_matrix, verify_cptp, verify_extension, XMatrix,
};
use qglauber_core::io::{parse_x_csv, write_mat8_csv, write_matrix_csv};
use qglauber_core::{Error, Variant};

use crate::Status;

fn load_channels(variant: Option<&str>, x_file: Option<&Path>) -> Result<Vec<XMatrix>> {
    if let Some(path) = x_file {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let entries = parse_x_csv(&text).with_context(|| format!("in {}", path.display()))?;
        return Ok(vec![XMatrix::custom(entries)?]);
    }
    match variant {
        Some(v) => Ok(vec![build_x_matrix(v.parse::<Variant>()?)]),
        None => Ok(Variant::ALL.iter().map(|&v| build_x_matrix(v)).collect()),
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

/// Prints the report for one channel and returns whether it passed.
fn report(x: &XMatrix) -> Result<bool> {
    let t = build_classical_transition();
    let k = build_kraus(x);
    let cptp = verify_cptp(&k);
    println!("channel {}", x.label());
    println!(
        "  cptp deviation       {:.3e}  {}",
        cptp.max_deviation,
        verdict(cptp.pass)
    );
    let ext_pass = match verify_extension(&k, &t) {
        Ok(c) => {
            println!(
                "  extension deviation  {:.3e}  {}",
                c.max_deviation,
                verdict(c.pass)
            );
            c.pass
        }
        Err(Error::NotCptp(_)) => {
            println!("  extension deviation  not evaluated (channel is not CPTP)  FAIL");
            false
        }
        Err(e) => return Err(e.into()),
    };
    let sums = x.extension_sums();
    let residuals: Vec<String> = sums.iter().map(|s| format!("{:+.3e}", s - 0.5)).collect();
    let rel_pass = x.extension_residual() <= qglauber_core::channels::TOLERANCE;
    println!(
        "  relation residuals   {}  {}",
        residuals.join(" "),
        verdict(rel_pass)
    );
    let pass = cptp.pass && ext_pass && rel_pass;
    println!("  result               {}", verdict(pass));
    Ok(pass)
}

pub fn cmd_verify(variant: Option<&str>, x_file: Option<&Path>) -> Result<Status> {
    let mut all = true;
    for x in load_channels(variant, x_file)? {
        all &= report(&x)?;
    }
    Ok(if all { Status::Ok } else { Status::Failed })
}

pub fn cmd_export(variant: Option<&str>, x_file: Option<&Path>, out: &Path) -> Result<Status> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let t = build_classical_transition();
    write_mat8_csv(fs::File::create(out.join("transition.csv"))?, &t.entries)?;
    for x in load_channels(variant, x_file)? {
        let k = build_kraus(&x);
        let label = x.label();
        write_matrix_csv(
            fs::File::create(out.join(format!("{label}_X.csv")))?,
            &x.entries,
        )?;
        write_mat8_csv(
            fs::File::create(out.join(format!("{label}_K1.csv")))?,
            &k.k1,
        )?;
        write_mat8_csv(
            fs::File::create(out.join(format!("{label}_K2.csv")))?,
            &k.k2,
        )?;
        println!("wrote {label} to {}", out.display());
    }
    Ok(Status::Ok)
}
