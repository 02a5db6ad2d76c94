use flowbridge_core::{Condition, Domain, FlowModel, TissueLabel};
use flowbridge_spectra::{DatasetDomain, SpectralDataset};

use crate::error::{EvalError, Result};

/// Encodes each simulated spectrum under (sim, own label) and decodes it under
/// (real, own label). Labels carry over unchanged.
pub fn transfer_sim_to_real(model: &FlowModel<f64>, sim: &SpectralDataset) -> Result<SpectralDataset> {
    transfer_between(model, sim, Domain::Sim, Domain::Real, DatasetDomain::Transferred)
}

/// Inverse direction of [`transfer_sim_to_real`].
pub fn transfer_real_to_sim(model: &FlowModel<f64>, real: &SpectralDataset) -> Result<SpectralDataset> {
    transfer_between(model, real, Domain::Real, Domain::Sim, DatasetDomain::Sim)
}

fn transfer_between(
    model: &FlowModel<f64>,
    ds: &SpectralDataset,
    from: Domain,
    to: Domain,
    tag: DatasetDomain,
) -> Result<SpectralDataset> {
    if model.dim() != ds.dim() {
        return Err(EvalError::Input(format!(
            "model expects {} features, dataset has {}",
            model.dim(),
            ds.dim()
        )));
    }
    let labels = ds.required_labels()?;
    let src: Vec<Condition> = labels.iter().map(|&c| Condition::new(from, TissueLabel::Class(c))).collect();
    let dst: Vec<Condition> = src.iter().map(|c| c.with_domain(to)).collect();
    let moved = model.transfer(&ds.spectra, &src, &dst)?;
    Ok(SpectralDataset {
        spectra: moved,
        domain: tag,
        ..ds.clone()
    })
}
