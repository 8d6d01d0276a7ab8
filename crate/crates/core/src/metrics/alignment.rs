use super::FeatureMatrix;
use crate::error::{Error, Result};

fn paired_cosines(images: &FeatureMatrix, texts: &FeatureMatrix) -> Result<Vec<f64>> {
    if images.rows() != texts.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} image embeddings vs {} text embeddings",
            images.rows(),
            texts.rows()
        )));
    }
    if images.cols() != texts.cols() {
        return Err(Error::DimensionMismatch(format!(
            "image embedding dim {} vs text embedding dim {}",
            images.cols(),
            texts.cols()
        )));
    }
    images
        .iter_rows()
        .zip(texts.iter_rows())
        .enumerate()
        .map(|(i, (a, b))| {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::InvalidInput(format!("zero-norm embedding in pair {i}")));
            }
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            Ok(dot / (na * nb))
        })
        .collect()
}

/// Mean of `100 · max(0, cos(image_i, text_i))` over paired rows.
pub fn clip_score(images: &FeatureMatrix, texts: &FeatureMatrix) -> Result<f64> {
    let cos = paired_cosines(images, texts)?;
    Ok(cos.iter().map(|c| 100.0 * c.max(0.0)).sum::<f64>() / cos.len() as f64)
}

/// Mean of `logit_scale · cos(image_i, text_i)`, unclamped.
pub fn pick_score(images: &FeatureMatrix, texts: &FeatureMatrix, logit_scale: f64) -> Result<f64> {
    if !(logit_scale > 0.0 && logit_scale.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "logit scale must be positive, got {logit_scale}"
        )));
    }
    let cos = paired_cosines(images, texts)?;
    Ok(cos.iter().map(|c| logit_scale * c).sum::<f64>() / cos.len() as f64)
}

/// Pass-through mode for preference scores produced elsewhere.
pub fn pick_score_precomputed(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no preference scores".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite preference score".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_with_cosine(c: f64, n: usize) -> (FeatureMatrix, FeatureMatrix) {
        let s = (1.0 - c * c).sqrt();
        let img = FeatureMatrix::from_row_vecs(&vec![vec![1.0, 0.0]; n]).unwrap();
        let txt = FeatureMatrix::from_row_vecs(&vec![vec![c, s]; n]).unwrap();
        (img, txt)
    }

    #[test]
    fn clip_scale() {
        let (a, b) = pairs_with_cosine(1.0, 3);
        assert!((clip_score(&a, &b).unwrap() - 100.0).abs() < 1e-12);
        let (a, b) = pairs_with_cosine(0.0, 3);
        assert_eq!(clip_score(&a, &b).unwrap(), 0.0);
        let (a, b) = pairs_with_cosine(0.30, 5);
        assert!((clip_score(&a, &b).unwrap() - 30.0).abs() < 1e-12);
        let (a, b) = pairs_with_cosine(-0.5, 2);
        assert_eq!(clip_score(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn pick_scale() {
        let (a, b) = pairs_with_cosine(1.0, 3);
        assert!((pick_score(&a, &b, 100.0).unwrap() - 100.0).abs() < 1e-12);
        let (a, b) = pairs_with_cosine(0.20, 4);
        assert!((pick_score(&a, &b, 100.0).unwrap() - 20.0).abs() < 1e-12);
        let (a, b) = pairs_with_cosine(-0.5, 2);
        assert!((pick_score(&a, &b, 100.0).unwrap() + 50.0).abs() < 1e-12);
        assert!(pick_score(&a, &b, 0.0).is_err());
        assert_eq!(pick_score_precomputed(&[18.0, 22.0]).unwrap(), 20.0);
    }

    #[test]
    fn mismatches_and_zero_rows() {
        let (a, _) = pairs_with_cosine(1.0, 3);
        let (_, b) = pairs_with_cosine(1.0, 2);
        assert!(matches!(clip_score(&a, &b), Err(Error::DimensionMismatch(_))));
        let z = FeatureMatrix::from_row_vecs(&[vec![0.0, 0.0]]).unwrap();
        let o = FeatureMatrix::from_row_vecs(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(clip_score(&z, &o), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rescaling_rows_leaves_clip_unchanged() {
        let img = FeatureMatrix::from_row_vecs(&[vec![0.3, 0.7, -0.2], vec![1.0, 2.0, 3.0]]).unwrap();
        let txt = FeatureMatrix::from_row_vecs(&[vec![0.5, 0.1, 0.4], vec![2.0, -1.0, 0.5]]).unwrap();
        let scaled = FeatureMatrix::from_row_vecs(&[vec![3.0, 7.0, -2.0], vec![0.01, 0.02, 0.03]]).unwrap();
        let a = clip_score(&img, &txt).unwrap();
        let b = clip_score(&scaled, &txt).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
