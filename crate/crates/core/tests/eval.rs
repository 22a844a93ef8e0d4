use proptest::prelude::*;
use tsclass::eval::{
    accuracy, compare, confusion, evaluate_method, format_table, precision_recall_f1,
    write_reports_csv, ConfusionMatrix, Method, MethodReport, REPORT_COLUMNS,
};
use tsclass::Label::{self, Broken as B, Intact as I};
use tsclass::Result;

#[test]
fn hand_enumerated_confusion() {
    let cm = confusion(&[B, B, I, I], &[B, I, I, B]).unwrap();
    assert_eq!(
        cm,
        ConfusionMatrix {
            tp: 1,
            fp: 1,
            fn_: 1,
            tn: 1
        }
    );
    let s = precision_recall_f1(&cm);
    assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    let cm = confusion(&[B, B, B, I, I], &[B, B, I, I, B]).unwrap();
    assert_eq!(
        cm,
        ConfusionMatrix {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 1
        }
    );
    assert_eq!(
        cm.swap_positive(),
        ConfusionMatrix {
            tp: 1,
            fp: 1,
            fn_: 1,
            tn: 2
        }
    );
}

#[test]
fn full_test_set_accuracy() {
    let truth = vec![B; 1236];
    let mut pred = truth.clone();
    for p in pred.iter_mut().take(4) {
        *p = I;
    }
    assert!((accuracy(&pred, &truth).unwrap() - 0.996763754).abs() < 1e-9);
}

#[test]
fn degenerate_denominators_are_flagged() {
    let none_predicted = precision_recall_f1(&ConfusionMatrix {
        tp: 0,
        fp: 0,
        fn_: 3,
        tn: 2,
    });
    assert!(none_predicted.precision_degenerate && !none_predicted.recall_degenerate);
    assert!(none_predicted.f1_degenerate);
    assert_eq!((none_predicted.precision, none_predicted.f1), (0.0, 0.0));

    let no_positives = precision_recall_f1(&ConfusionMatrix {
        tp: 0,
        fp: 2,
        fn_: 0,
        tn: 2,
    });
    assert!(no_positives.recall_degenerate && !no_positives.precision_degenerate);
    assert_eq!(no_positives.precision, 0.0);

    let perfect = precision_recall_f1(&ConfusionMatrix {
        tp: 3,
        fp: 0,
        fn_: 0,
        tn: 1,
    });
    assert!(!perfect.precision_degenerate && !perfect.recall_degenerate && !perfect.f1_degenerate);
    assert_eq!(perfect.f1, 1.0);
}

#[test]
fn mismatched_or_empty_inputs_fail() {
    assert!(confusion(&[B], &[B, I]).is_err());
    assert!(confusion(&[], &[]).is_err());
    assert_eq!(ConfusionMatrix::default().accuracy(), 0.0);
}

struct Fixed {
    pred: Vec<Label>,
    trained: bool,
}

impl Method for Fixed {
    fn name(&self) -> String {
        "fixed".into()
    }
    fn config_summary(&self) -> String {
        "constant, with comma".into()
    }
    fn fit(&mut self) -> Result<()> {
        self.trained = true;
        Ok(())
    }
    fn is_trained(&self) -> bool {
        self.trained
    }
    fn predict_test(&self) -> Result<Vec<Label>> {
        Ok(self.pred.clone())
    }
}

#[test]
fn untrained_methods_cannot_be_evaluated() {
    let m = Fixed {
        pred: vec![B, I],
        trained: false,
    };
    assert!(evaluate_method(&m, &[B, I], 0.0).is_err());
}

#[test]
fn compare_trains_and_reports_every_method() {
    let truth = [B, I, B, I];
    let mut methods: Vec<Box<dyn Method>> = vec![
        Box::new(Fixed {
            pred: vec![B, I, B, I],
            trained: false,
        }),
        Box::new(Fixed {
            pred: vec![B, B, B, B],
            trained: false,
        }),
    ];
    let reports = compare(&mut methods, &truth).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].accuracy, 1.0);
    assert_eq!(reports[1].accuracy, 0.5);
    assert!(reports
        .iter()
        .all(|r| r.train_ms >= 0.0 && r.test_ms >= 0.0));

    let mut buf = Vec::new();
    write_reports_csv(&mut buf, &reports).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        REPORT_COLUMNS.to_vec()
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][7], "constant, with comma");
    assert_eq!(&rows[1][4], "0.500000");

    let table = format_table(&reports);
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("method"));
}

fn labels() -> impl Strategy<Value = Vec<(bool, bool)>> {
    prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)
}

proptest! {
    #[test]
    fn counts_and_f1_identity(pairs in labels()) {
        let pred: Vec<Label> = pairs.iter().map(|p| Label::from_index(p.0 as usize)).collect();
        let truth: Vec<Label> = pairs.iter().map(|p| Label::from_index(p.1 as usize)).collect();
        let cm = confusion(&pred, &truth).unwrap();
        prop_assert_eq!(cm.total(), pairs.len());
        let s = precision_recall_f1(&cm);
        if s.precision + s.recall > 0.0 {
            let harmonic = 2.0 / (1.0 / s.precision + 1.0 / s.recall);
            prop_assert!((s.f1 - harmonic).abs() < 1e-12);
        } else {
            prop_assert_eq!(s.f1, 0.0);
        }
        let r = MethodReport::from_predictions("m", &pred, &truth, 1.0, 1.0, "").unwrap();
        prop_assert_eq!(r.accuracy, cm.accuracy());
        prop_assert_eq!(cm.swap_positive().swap_positive(), cm);
    }
}
