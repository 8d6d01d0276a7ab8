use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::codec::encode_png;
use super::field::ToyModel;
use super::sampler::{initial_noise, integrate, nfe_per_sample};
use crate::error::{Error, Result};
use crate::harness::protocol::{
    check_sample_id, write_json_atomic, JobFile, ResultFile, ResultImage, ResultStatus,
};
use crate::key::Steps;

/// Serve one adapter job: sample every requested point, write one PNG per
/// sample and `result.json` next to the job file.
pub fn run_job(job_path: &Path, model: &ToyModel) -> Result<ResultFile> {
    let job = JobFile::load(job_path)?;
    let steps = match job.steps {
        Steps::Fixed(n) => n,
        Steps::Dynamic => {
            return Err(Error::InvalidInput(
                "the toy generator has no adaptive solver; steps must be fixed".into(),
            ))
        }
    };
    let w = job.cfg.unwrap_or(1.0);
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::InvalidInput(format!("guidance weight must be ≥ 0, got {w}")));
    }
    let out_dir = if job.output_dir.is_absolute() {
        job.output_dir.clone()
    } else {
        job_path.parent().unwrap_or(Path::new(".")).join(&job.output_dir)
    };
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let uncond = model.unconditional();
    let images = job
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            check_sample_id(&s.id)?;
            let class = model.class(s.class_id)?;
            if class.name != s.class_name {
                return Err(Error::InvalidInput(format!(
                    "sample {}: class {} is `{}` in the toy model, job says `{}`",
                    s.id, s.class_id, class.name, s.class_name
                )));
            }
            let x = integrate(initial_noise(job.seed, i as u64), steps, w, &class.target(), &uncond)?;
            let file = format!("{}.png", s.id);
            let path = out_dir.join(&file);
            fs::write(&path, encode_png(x)?).map_err(|e| Error::io(&path, e))?;
            Ok(ResultImage {
                id: s.id.clone(),
                file: file.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let nfe = u64::from(nfe_per_sample(steps, w));
    let result = ResultFile {
        status: ResultStatus::Ok,
        nfe: Some(vec![nfe; images.len()]),
        images,
        message: None,
    };
    write_json_atomic(&JobFile::result_path(job_path), &result)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::protocol::JobSample;
    use crate::toyflow::codec::decode_png;

    fn job(dir: &Path, cfg: Option<f64>, steps: Steps, n: usize) -> std::path::PathBuf {
        let model = ToyModel::default_four();
        let samples = (0..n)
            .map(|i| {
                let c = &model.classes[i % 4];
                JobSample {
                    id: format!("s{i:03}"),
                    class_id: c.class_id,
                    class_name: c.name.clone(),
                    prompt: format!("a photo of a {}", c.name),
                }
            })
            .collect();
        let job = JobFile {
            schema_version: 1,
            model_id: "toy".into(),
            cfg,
            steps,
            seed: 42,
            samples,
            output_dir: "images".into(),
        };
        let p = dir.join("job.json");
        write_json_atomic(&p, &job).unwrap();
        p
    }

    #[test]
    fn writes_images_and_result() {
        let dir = tempfile::tempdir().unwrap();
        let p = job(dir.path(), Some(7.0), Steps::Fixed(25), 10);
        let r = run_job(&p, &ToyModel::default_four()).unwrap();
        assert_eq!(r.images.len(), 10);
        assert_eq!(r.nfe.as_deref(), Some(&[50u64; 10][..]));
        let on_disk = ResultFile::load(dir.path().join("result.json")).unwrap();
        assert_eq!(on_disk, r);
        assert_eq!(fs::read_dir(dir.path().join("images")).unwrap().count(), 10);
    }

    #[test]
    fn unguided_single_step_hits_class_means() {
        let dir = tempfile::tempdir().unwrap();
        let p = job(dir.path(), Some(1.0), Steps::Fixed(1), 8);
        let model = ToyModel::default_four();
        let r = run_job(&p, &model).unwrap();
        assert_eq!(r.nfe.as_deref(), Some(&[1u64; 8][..]));
        for (i, img) in r.images.iter().enumerate() {
            let bytes = fs::read(dir.path().join("images").join(&img.file)).unwrap();
            let x = decode_png(&bytes).unwrap();
            let m = model.classes[i % 4].mean;
            assert!((x[0] - m[0]).abs() < 1e-6 && (x[1] - m[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_dynamic_and_wrong_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = job(dir.path(), None, Steps::Dynamic, 2);
        assert!(run_job(&p, &ToyModel::default_four()).is_err());
        let p = job(dir.path(), None, Steps::Fixed(2), 2);
        let mut m = ToyModel::default_four();
        m.classes[0].name = "other".into();
        assert!(run_job(&p, &m).is_err());
    }
}
