//! Regenerates the bundled CLI test fixtures.
//!
//! `cargo run -p hpmpc --example gen_fixtures -- crates/cli/tests/fixtures`

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use hpmpc::ident::write_training_csv;
use hpmpc::model::ThermalParams;
use hpmpc::series::parse_timestamp;
use hpmpc::sim::{write_weather_csv, ExogenousProfile};
use hpmpc::synth::{
    seasonal_daily_temperatures, synthesize_training, synthesize_weather, ColdSnap, TrainingProfile, WeatherProfile,
};

fn main() -> hpmpc::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/cli/tests/fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let truth = ThermalParams::new(2.04, 1.06, 6.5, 20.6)?;

    let mut snap = WeatherProfile::winter(parse_timestamp("2023-01-09T00:00:00", 1)?, 9, 21);
    snap.cold_snap = Some(ColdSnap { start_day: 1.0, days: 6.0, depth: 5.0 });
    write_weather_csv(File::create(dir.join("weather_coldsnap.csv"))?, &synthesize_weather(&snap))?;

    let w = synthesize_weather(&WeatherProfile::winter(parse_timestamp("2022-12-01T00:00:00", 1)?, 30, 21));
    let prof = TrainingProfile {
        params: truth,
        amplitude: (0.8, 1.5),
        exogenous: Some(ExogenousProfile::default()),
        q_e_constant: 0.5,
        noise_t: 0.1,
        noise_q: 0.3,
        seed: 11,
    };
    let (s, _) = synthesize_training(&w, &prof)?;
    write_training_csv(&dir.join("training.csv"), &s)?;

    let days = 151;
    let temps = seasonal_daily_temperatures(days, 2.0, 8);
    let start = NaiveDate::from_ymd_opt(2022, 11, 1).expect("valid date");
    let mut f = File::create(dir.join("seasonal_temps.csv"))?;
    writeln!(f, "# Synthetic heating season, 2022-11-01 to 2023-03-31.")?;
    writeln!(f, "# Daily mean outdoor temperature 6.5 - 9 sin(pi i / 150) + N(0, 2^2), i = 0..150, seed 8.")?;
    let mean = temps.iter().sum::<f64>() / days as f64;
    let hdd: f64 = temps.iter().map(|t| (20.7 - t - 8.0).max(0.0)).sum();
    writeln!(f, "# Mean {mean:.2} C; heating degree-days above an 8 C offset from 20.7 C: {hdd:.1}.")?;
    writeln!(f, "date,t_out_mean_c")?;
    for (i, t) in temps.iter().enumerate() {
        writeln!(f, "{},{t:.3}", start + Duration::days(i as i64))?;
    }
    Ok(())
}
