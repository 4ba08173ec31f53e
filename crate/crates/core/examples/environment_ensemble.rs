//! One expert per training environment plus a meta model over the experts'
//! predictions and the environment index, compared with a single pooled
//! model on two unseen environments.

use normative::constraints::env_mse_variance;
use normative::datagen::gen_environment_dataset;
use normative::intrinsic::{env_ensemble_fit, Family};
use normative::learners::fit_linear;
use normative::metrics::mse;

fn main() -> normative::Result<()> {
    let ds = gen_environment_dataset(42, 250)?;
    let env = ds.environment.clone().expect("environment column");
    let rows = |keep: &[u8]| (0..ds.n_rows()).filter(|&i| keep.contains(&env[i])).collect::<Vec<_>>();
    let train = ds.select(&rows(&[0, 1]));

    let pooled = fit_linear(&train)?;
    let ensemble = env_ensemble_fit(&ds, &[0, 1], &Family::Linear)?;

    let (mut pooled_mse, mut ensemble_mse) = (Vec::new(), Vec::new());
    for e in [2u8, 3] {
        let part = ds.select(&rows(&[e]));
        let y = part.real_targets()?;
        let envs = part.environment.clone().expect("environment column");
        pooled_mse.push(mse(&pooled.predict_values(&part.features)?, y)?);
        ensemble_mse.push(mse(&ensemble.predict(&part.features, &envs)?, y)?);
    }
    println!("pooled   mse per env {pooled_mse:.3?}, variance {:.3}", env_mse_variance(&pooled_mse));
    println!("ensemble mse per env {ensemble_mse:.3?}, variance {:.3}", env_mse_variance(&ensemble_mse));
    Ok(())
}
