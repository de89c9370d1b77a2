use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalyzeError;
use crate::compare::ScoreTable;
use crate::signal::{LoessFit, LoessParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramPoint {
    pub bullet1: String,
    pub bullet2: String,
    /// Absolute difference of the two shot numbers.
    pub distance: u32,
    pub score: f64,
    pub unreliable: bool,
}

/// Smoothed score as a function of shot distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCurve {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub points: Vec<VariogramPoint>,
    /// `None` when the reliable points cannot support a LOESS fit.
    pub trend: Option<TrendCurve>,
}

/// Scores of every unordered pair of distinct bullets against the difference
/// of their shot numbers, plus a LOESS trend over the reliable points
/// evaluated at each observed distance.
pub fn variogram(
    table: &ScoreTable,
    shots: &BTreeMap<String, u32>,
    trend: &LoessParams,
) -> Result<Variogram, AnalyzeError> {
    let mut seen: BTreeMap<u32, &str> = BTreeMap::new();
    let mut shot_of = Vec::with_capacity(table.len());
    for id in &table.bullet_ids {
        let s = *shots
            .get(id)
            .ok_or_else(|| AnalyzeError::MissingShot(id.clone()))?;
        if let Some(other) = seen.insert(s, id) {
            return Err(AnalyzeError::DuplicateShot {
                shot: s,
                first: other.to_string(),
                second: id.clone(),
            });
        }
        shot_of.push(s);
    }

    let mut points = Vec::with_capacity(table.len() * table.len().saturating_sub(1) / 2);
    for i in 0..table.len() {
        for j in i + 1..table.len() {
            let s = table.score(i, j);
            points.push(VariogramPoint {
                bullet1: table.bullet_ids[i].clone(),
                bullet2: table.bullet_ids[j].clone(),
                distance: shot_of[i].abs_diff(shot_of[j]),
                score: s.ccf_diff,
                unreliable: s.unreliable,
            });
        }
    }
    let trend = trend_curve(&points, trend);
    Ok(Variogram { points, trend })
}

fn trend_curve(points: &[VariogramPoint], params: &LoessParams) -> Option<TrendCurve> {
    let reliable: Vec<&VariogramPoint> = points.iter().filter(|p| !p.unreliable).collect();
    let xs: Vec<f64> = reliable.iter().map(|p| p.distance as f64).collect();
    let ys: Vec<f64> = reliable.iter().map(|p| p.score).collect();
    let fit = LoessFit::new(&xs, &ys, &vec![true; xs.len()], params).ok()?;
    let mut grid: Vec<f64> = xs.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let fitted: Vec<f64> = grid.iter().map(|&x| fit.predict(x)).collect();
    fitted.iter().all(|y| y.is_finite()).then_some(TrendCurve {
        xs: grid,
        ys: fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::BulletScore;

    fn table(ids: &[&str], score: impl Fn(usize, usize) -> f64) -> ScoreTable {
        let k = ids.len();
        let mut scores = Vec::new();
        for i in 0..k {
            for j in i..k {
                let mut s = BulletScore::undefined();
                s.ccf_diff = score(i, j);
                s.unreliable = false;
                scores.push(s);
            }
        }
        ScoreTable {
            bullet_ids: ids.iter().map(|s| s.to_string()).collect(),
            scores,
        }
    }

    fn shots(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(id, s)| (id.to_string(), *s)).collect()
    }

    #[test]
    fn shot_distances() {
        let t = table(&["B11", "B12", "B50"], |_, _| 0.5);
        let v = variogram(
            &t,
            &shots(&[("B11", 11), ("B12", 12), ("B50", 50)]),
            &LoessParams::default(),
        )
        .unwrap();
        let d: Vec<u32> = v.points.iter().map(|p| p.distance).collect();
        assert_eq!(d, vec![1, 39, 38]);
    }

    #[test]
    fn constant_scores_give_constant_trend() {
        let ids: Vec<String> = (0..8).map(|i| format!("b{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let t = table(&refs, |_, _| 0.25);
        let sh: BTreeMap<String, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), (i * i) as u32))
            .collect();
        let v = variogram(&t, &sh, &LoessParams::default()).unwrap();
        assert_eq!(v.points.len(), 28);
        let trend = v.trend.unwrap();
        assert!(trend.ys.iter().all(|y| (y - 0.25).abs() < 1e-12));
        assert!(trend.xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn missing_and_duplicate_shots() {
        let t = table(&["a", "b"], |_, _| 0.0);
        assert_eq!(
            variogram(&t, &shots(&[("a", 1)]), &LoessParams::default()).unwrap_err(),
            AnalyzeError::MissingShot("b".into())
        );
        assert!(matches!(
            variogram(&t, &shots(&[("a", 1), ("b", 1)]), &LoessParams::default()),
            Err(AnalyzeError::DuplicateShot { shot: 1, .. })
        ));
    }
}
