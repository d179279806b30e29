//! Draws one sample from a contaminated population, writes it as CSV and
//! checks that the R and Q parts are uncorrelated.

use rqsim::datagen::{cross_term_check, generate_sample, row_moments};
use rqsim::model::PopulationSpec;
use rqsim::report::write_data_csv;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PopulationSpec::standard(0.70, 0.50, 300)?;
    let data = generate_sample(&spec, 42)?;
    println!("{} variables x {} cases", data.variables(), data.cases());

    let (means, vars) = row_moments(data.values());
    println!("variable means:     {:.3}", means.transpose());
    println!("variable variances: {:.3}", vars.transpose());

    let h: Vec<f64> = (0..20)
        .map(|s| cross_term_check(&spec, s))
        .collect::<rqsim::Result<_>>()?;
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    println!("mean R x Q cross term over 20 samples: {mean:.4}");

    let path = std::env::temp_dir().join("rqsim_sample.csv");
    let file = std::fs::File::create(&path)?;
    write_data_csv(&data, file)?;
    println!("wrote {}", path.display());
    Ok(())
}
