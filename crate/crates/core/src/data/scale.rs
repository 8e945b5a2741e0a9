//! Train-split-only median imputation and per-feature z-scoring for the
//! bond, ratios and market channels. The covariate channel is already a
//! one-hot plus a [0, 1] ordinal, so it is left untouched.

use super::{Channel, Dataset, Sample};

#[derive(Debug, Clone)]
pub struct ChannelStats {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Scaler {
    pub bond: ChannelStats,
    pub ratios: ChannelStats,
    pub market: ChannelStats,
}

fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn fit_channel(samples: &[&Sample], channel: Channel, width: usize) -> ChannelStats {
    let mut medians = vec![0.0; width];
    for (j, m) in medians.iter_mut().enumerate() {
        let mut column: Vec<f64> = samples
            .iter()
            .map(|s| s.numeric_channel(channel)[j])
            .filter(|v| v.is_finite())
            .collect();
        *m = median(&mut column);
    }
    let n = samples.len().max(1) as f64;
    let mut means = vec![0.0; width];
    let mut stds = vec![0.0; width];
    for j in 0..width {
        let mut sum = 0.0;
        for s in samples {
            let v = s.numeric_channel(channel)[j];
            sum += if v.is_finite() { v } else { medians[j] };
        }
        means[j] = sum / n;
        let mut var = 0.0;
        for s in samples {
            let v = s.numeric_channel(channel)[j];
            let v = if v.is_finite() { v } else { medians[j] };
            var += (v - means[j]) * (v - means[j]);
        }
        let std = (var / n).sqrt();
        stds[j] = if std > 1e-12 { std } else { 1.0 };
    }
    ChannelStats {
        medians,
        means,
        stds,
    }
}

impl Scaler {
    /// Fits medians, means and stds on the training samples only.
    pub fn fit(train: &[&Sample]) -> Scaler {
        Scaler {
            bond: fit_channel(train, Channel::Bond, super::BOND_WIDTH),
            ratios: fit_channel(train, Channel::Ratios, super::RATIOS_WIDTH),
            market: fit_channel(train, Channel::Market, super::MARKET_WIDTH),
        }
    }

    fn apply_channel(stats: &ChannelStats, values: &mut [f64]) {
        for (j, v) in values.iter_mut().enumerate() {
            let imputed = if v.is_finite() { *v } else { stats.medians[j] };
            *v = (imputed - stats.means[j]) / stats.stds[j];
        }
    }

    pub fn apply(&self, sample: &mut Sample) {
        Scaler::apply_channel(&self.bond, &mut sample.bond);
        Scaler::apply_channel(&self.ratios, &mut sample.ratios);
        Scaler::apply_channel(&self.market, &mut sample.market);
    }

    pub fn apply_dataset(&self, dataset: &mut Dataset) {
        for sample in dataset.samples.iter_mut() {
            self.apply(sample);
        }
    }
}
