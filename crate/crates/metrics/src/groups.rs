use crate::{MetricsError, Result};
use synthbias::Sample;

/// Members of one prefix group within a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub group_id: usize,
    pub sample_indices: Vec<usize>,
}

impl GroupSpec {
    pub fn validate(&self, split_len: usize) -> Result<()> {
        if self.sample_indices.is_empty() {
            return Err(MetricsError::InvalidInput(format!("group {} is empty", self.group_id)));
        }
        if let Some(&i) = self.sample_indices.iter().find(|&&i| i >= split_len) {
            return Err(MetricsError::InvalidInput(format!(
                "group {}: index {i} out of range for split of {split_len}",
                self.group_id
            )));
        }
        Ok(())
    }
}

/// Non-empty groups of `split`, ordered by group id.
pub fn groups_of(split: &[Sample], num_groups: usize) -> Vec<GroupSpec> {
    let mut members = vec![Vec::new(); num_groups];
    for (i, s) in split.iter().enumerate() {
        if s.group_id < num_groups {
            members[s.group_id].push(i);
        }
    }
    members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(group_id, sample_indices)| GroupSpec { group_id, sample_indices })
        .collect()
}

fn mode(counts: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 && best.is_none_or(|b| n > counts[b]) {
            best = Some(c);
        }
    }
    best
}

/// Most frequent value of `values` within each group; ties go to the lowest value.
pub fn modal_predictions(values: &[usize], groups: &[usize], num_groups: usize, k: usize) -> Vec<Option<usize>> {
    let mut counts = vec![vec![0usize; k]; num_groups];
    for (&v, &g) in values.iter().zip(groups) {
        if g < num_groups && v < k {
            counts[g][v] += 1;
        }
    }
    counts.iter().map(|c| mode(c)).collect()
}

/// Modal label of each group on the training split.
pub fn train_modal_labels(train: &[Sample], num_groups: usize, k: usize) -> Vec<Option<usize>> {
    let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let groups: Vec<usize> = train.iter().map(|s| s.group_id).collect();
    modal_predictions(&labels, &groups, num_groups, k)
}

/// The `count` groups whose modal label has the largest share of the group
/// on the training split. Ties go to the lower group id.
pub fn highest_bias_groups(train: &[Sample], num_groups: usize, k: usize, count: usize) -> Vec<usize> {
    let mut counts = vec![vec![0usize; k]; num_groups];
    for s in train {
        if s.group_id < num_groups && s.label < k {
            counts[s.group_id][s.label] += 1;
        }
    }
    let mut share: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter_map(|(g, c)| {
            let n: usize = c.iter().sum();
            (n > 0).then(|| (g, *c.iter().max().unwrap_or(&0) as f64 / n as f64))
        })
        .collect();
    share.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    share.into_iter().take(count).map(|(g, _)| g).collect()
}
