use super::trajectory::{ReferenceSource, ReferenceVector};
use crate::error::{Error, Result};
use crate::eval::{word_count, ChallengeSuite, MinimalPair};

pub enum Metric<'a> {
    /// Words in the good sentence.
    SentenceLength,
    /// The pair's `depth` annotation.
    AnnotatedDepth,
    Custom {
        label: &'a str,
        score: &'a (dyn Fn(&MinimalPair) -> f64 + Sync),
    },
}

impl Metric<'_> {
    pub fn label(&self) -> &str {
        match self {
            Metric::SentenceLength => "sentence_length",
            Metric::AnnotatedDepth => "annotated_depth",
            Metric::Custom { label, .. } => label,
        }
    }
}

/// Per challenge, the mean of the metric over its pairs, applied to the
/// grammatical sentence.
pub fn metric_vector(suite: &ChallengeSuite, metric: &Metric) -> Result<ReferenceVector> {
    if let Metric::AnnotatedDepth = metric {
        let missing: Vec<String> = suite
            .challenges
            .iter()
            .flat_map(|c| {
                c.pairs
                    .iter()
                    .filter(|p| p.depth.is_none())
                    .map(move |p| format!("{}#{}", c.uid, p.pair_id))
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingAnnotations(missing));
        }
    }
    let values = suite.challenges.iter().map(|c| {
        let total: f64 = c
            .pairs
            .iter()
            .map(|p| match metric {
                Metric::SentenceLength => word_count(&p.sentence_good) as f64,
                Metric::AnnotatedDepth => p.depth.expect("checked above"),
                Metric::Custom { score, .. } => score(p),
            })
            .sum();
        (c.uid.clone(), total / c.pairs.len() as f64)
    });
    ReferenceVector::new(metric.label(), values, ReferenceSource::Metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Challenge;

    fn suite(depths: [Option<f64>; 2]) -> ChallengeSuite {
        ChallengeSuite::new(vec![Challenge {
            uid: "c".into(),
            linguistics_term: "t".into(),
            field: "f".into(),
            pairs: vec![
                MinimalPair {
                    pair_id: 0,
                    sentence_good: "The cat ran.".into(),
                    sentence_bad: "The cat ran the dog.".into(),
                    depth: depths[0],
                },
                MinimalPair {
                    pair_id: 1,
                    sentence_good: "The old cat ran away.".into(),
                    sentence_bad: "x".into(),
                    depth: depths[1],
                },
            ],
        }])
        .unwrap()
    }

    #[test]
    fn length_of_good_sentences() {
        let v = metric_vector(&suite([None, None]), &Metric::SentenceLength).unwrap();
        assert_eq!(v.values, vec![("c".to_string(), 5.0)]);
    }

    #[test]
    fn constant_custom_metric() {
        let one = |_: &MinimalPair| 1.0;
        let v = metric_vector(&suite([None, None]), &Metric::Custom { label: "one", score: &one }).unwrap();
        assert_eq!(v.label, "one");
        assert_eq!(v.values[0].1, 1.0);
    }

    #[test]
    fn depth_requires_annotations() {
        let err = metric_vector(&suite([Some(2.0), None]), &Metric::AnnotatedDepth).unwrap_err();
        assert!(matches!(&err, Error::MissingAnnotations(m) if m == &vec!["c#1".to_string()]));
        let v = metric_vector(&suite([Some(2.0), Some(5.0)]), &Metric::AnnotatedDepth).unwrap();
        assert_eq!(v.values[0].1, 3.5);
    }
}
