use super::{check_finite, median, StatsError};

/// Slopes `(y_j - y_i) / (t_j - t_i)` for every `i < j` with distinct times,
/// in pair order.
pub fn pairwise_slopes(series: &[(f64, f64)]) -> Result<Vec<f64>, StatsError> {
    if series.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: series.len(),
        });
    }
    let flat: Vec<f64> = series.iter().flat_map(|&(t, y)| [t, y]).collect();
    check_finite(&flat)?;
    let mut slopes = Vec::with_capacity(series.len() * (series.len() - 1) / 2);
    for (i, &(ti, yi)) in series.iter().enumerate() {
        for &(tj, yj) in &series[i + 1..] {
            if tj != ti {
                slopes.push((yj - yi) / (tj - ti));
            }
        }
    }
    if slopes.is_empty() {
        return Err(StatsError::DegenerateTime);
    }
    Ok(slopes)
}

/// Median of all pairwise slopes.
pub fn theil_sen(series: &[(f64, f64)]) -> Result<f64, StatsError> {
    let slopes = pairwise_slopes(series)?;
    Ok(median(&slopes).expect("non-empty"))
}
