//! Paint per-ROI values into a frame through the mask.

use std::collections::BTreeMap;

use crate::imaging::{RoiMaskSet, ThermalFrame};
use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::time::Timestamp;

use super::SynthError;

/// Each pixel takes its ROI's value; unassigned pixels take the
/// background value.
pub fn render_frame<T: Scalar>(
    values: &BTreeMap<Roi, T>,
    masks: &RoiMaskSet,
    timestamp: Timestamp,
) -> Result<ThermalFrame<T>, SynthError> {
    let mut lut: [Option<T>; 9] = [None; 9];
    for roi in masks.present_rois() {
        lut[roi.index()] = Some(*values.get(&roi).ok_or(SynthError::MissingRoiValue(roi))?);
    }
    let background = values.get(&Roi::Background).copied();
    let pixels = masks
        .labels()
        .iter()
        .map(|l| match l {
            Some(r) => Ok(lut[r.index()].expect("present ROI has a value")),
            None => background.ok_or(SynthError::MissingRoiValue(Roi::Background)),
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(ThermalFrame::new(masks.width(), masks.height(), timestamp, pixels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::extract_all;
    use crate::imaging::default_scene_mask;
    use crate::time::parse_ts;
    use proptest::prelude::*;

    fn ts() -> Timestamp {
        parse_ts("2022-01-01 12:00:00").unwrap()
    }

    #[test]
    fn body_and_rest() {
        let mask = default_scene_mask();
        let values: BTreeMap<Roi, f64> = Roi::ALL.iter().map(|&r| (r, if r == Roi::Body { 31.0 } else { 20.0 })).collect();
        let f = render_frame(&values, &mask, ts()).unwrap();
        for (v, l) in f.values().iter().zip(mask.labels()) {
            assert_eq!(*v, if *l == Some(Roi::Body) { 31.0 } else { 20.0 });
        }
        assert_eq!((f.width(), f.height()), (mask.width(), mask.height()));
    }

    #[test]
    fn missing_value_and_consistent_absence() {
        let full = default_scene_mask();
        let mut values: BTreeMap<Roi, f64> = Roi::ALL.iter().map(|&r| (r, 20.0)).collect();
        values.remove(&Roi::Out4);
        assert!(matches!(render_frame(&values, &full, ts()), Err(SynthError::MissingRoiValue(Roi::Out4))));
        let labels = full.labels().iter().map(|l| if *l == Some(Roi::Out4) { None } else { *l }).collect();
        let mask = RoiMaskSet::new(full.width(), full.height(), labels, vec![Roi::Out4]).unwrap();
        let f = render_frame(&values, &mask, ts()).unwrap();
        assert!(f.values().iter().all(|&v| v == 20.0));
    }

    proptest! {
        #[test]
        fn render_then_extract_is_identity(vals in proptest::collection::vec(-20.0f64..550.0, 9)) {
            let mask = default_scene_mask();
            let values: BTreeMap<Roi, f64> = Roi::ALL.iter().copied().zip(vals).collect();
            let f = render_frame(&values, &mask, ts()).unwrap();
            let got = extract_all(&f, &mask, 0.05).unwrap();
            prop_assert_eq!(got.sample.temps, values);
        }
    }
}
