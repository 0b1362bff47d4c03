use crate::{Error, RandomStream, Result};
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use std::io::{Read, Write};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// Row-major feature matrix with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(names: Vec<String>) -> Self {
        Dataset { names, features: Vec::new(), labels: Vec::new() }
    }

    pub fn with_capacity(names: Vec<String>, rows: usize) -> Self {
        let dim = names.len();
        Dataset { names, features: Vec::with_capacity(rows * dim), labels: Vec::with_capacity(rows) }
    }

    /// Builds a dataset from flat row-major features.
    pub fn from_parts(names: Vec<String>, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() * names.len() {
            return Err(Error::Shape(format!(
                "{} feature values do not fill {} rows of width {}",
                features.len(),
                labels.len(),
                names.len()
            )));
        }
        Ok(Dataset { names, features, labels })
    }

    pub fn push(&mut self, features: &[f64], label: f64) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::Shape(format!("row has {} features, dataset has {}", features.len(), self.dim())));
        }
        self.features.extend_from_slice(features);
        self.labels.push(label);
        Ok(())
    }

    pub fn append(&mut self, other: &Dataset) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Shape("cannot append datasets with different columns".into()));
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample { features: self.row(i).to_vec(), label: self.labels[i] }
    }

    pub fn feature_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.dim()), &self.features).expect("row-major buffer matches shape")
    }

    /// Rows in the given order; indices may repeat.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::with_capacity(self.names.clone(), indices.len());
        for &i in indices {
            out.features.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Permutes rows, moving each label with its features.
    pub fn shuffled(&self, stream: &RandomStream) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream.rng());
        self.subset(&idx)
    }

    /// Random split into `(first, rest)` with `round(fraction * len)` rows first.
    pub fn split(&self, fraction: f64, stream: &RandomStream) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Domain(format!("split fraction must lie in (0, 1), got {fraction}")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream.rng());
        let cut = (fraction * self.len() as f64).round() as usize;
        Ok((self.subset(&idx[..cut]), self.subset(&idx[cut..])))
    }

    /// Order-independent keyed digest of the (features, label) pairs.
    ///
    /// Equal for any row permutation of the same pairs, different (with high
    /// probability) once a label is detached from its features.
    pub fn checksum(&self, key: u64) -> u64 {
        (0..self.len()).fold(0u64, |acc, i| {
            let mut h = mix(key ^ 0x5155_4D52_4F57_5321);
            for v in self.row(i) {
                h = mix(h ^ v.to_bits());
            }
            h = mix(h ^ self.labels[i].to_bits());
            acc.wrapping_add(h)
        })
    }

    /// CSV with a header row of feature names followed by `label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        header.push("label".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for i in 0..self.len() {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.labels[i].to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().next_back() != Some("label") {
            return Err(Error::Load("dataset header must end with a label column".into()));
        }
        let names: Vec<String> = header.iter().take(header.len() - 1).map(String::from).collect();
        let mut out = Dataset::new(names);
        let mut row = Vec::with_capacity(header.len());
        for rec in r.records() {
            let rec = rec?;
            row.clear();
            for field in rec.iter() {
                row.push(field.parse::<f64>().map_err(|e| Error::Load(format!("bad number {field:?}: {e}")))?);
            }
            let label = row.pop().ok_or_else(|| Error::Load("empty record".into()))?;
            out.push(&row, label)?;
        }
        Ok(out)
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> Dataset {
        let mut d = Dataset::new(vec!["a".into(), "b".into()]);
        for i in 0..n {
            d.push(&[i as f64 * 0.1, (i as f64).sin()], (i % 2) as f64).unwrap();
        }
        d
    }

    #[test]
    fn shuffle_keeps_pairs() {
        let d = toy(500);
        let s = d.shuffled(&RandomStream::new(1, 0));
        assert_ne!(s.labels(), d.labels());
        assert_eq!(s.checksum(7), d.checksum(7));
        let mut broken = s.clone();
        broken.labels.swap(0, 1);
        assert_ne!(broken.checksum(7), d.checksum(7));
    }

    #[test]
    fn split_partitions_rows() {
        let d = toy(100);
        let (a, b) = d.split(0.8, &RandomStream::new(2, 0)).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        let mut joined = a.clone();
        joined.append(&b).unwrap();
        assert_eq!(joined.checksum(3), d.checksum(3));
    }

    #[test]
    fn push_checks_width() {
        let mut d = toy(1);
        assert!(matches!(d.push(&[1.0], 0.0), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(rows in prop::collection::vec((any::<f64>(), -1e300f64..1e300, 0u8..2), 0..40)) {
            let mut d = Dataset::new(vec!["x".into(), "y".into()]);
            for (x, y, l) in &rows {
                let x = if x.is_finite() { *x } else { 0.0 };
                d.push(&[x, *y], *l as f64).unwrap();
            }
            let mut buf = Vec::new();
            d.write_csv(&mut buf).unwrap();
            let back = Dataset::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.labels(), d.labels());
        }
    }
}
