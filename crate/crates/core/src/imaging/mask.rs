//! Manually defined ROI masks.
//!
//! A mask is stored as a binary PGM (`P5`, maxval <= 255) whose pixel value
//! is an ROI id (0 = unassigned), plus a sidecar `<name>.labels` text file
//! mapping ids to labels:
//!
//! ```text
//! # id label
//! 1 in_1
//! ...
//! absent out_4
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::roi::Roi;
use crate::scalar::Scalar;

use super::{ImagingError, ThermalFrame};

/// Per-pixel ROI labelling of one camera's scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMaskSet {
    width: usize,
    height: usize,
    labels: Vec<Option<Roi>>,
    declared_absent: Vec<Roi>,
}

impl RoiMaskSet {
    /// Builds a mask. Every ROI must cover at least one pixel unless it is
    /// listed in `declared_absent`.
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<Option<Roi>>,
        declared_absent: Vec<Roi>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(ImagingError::MalformedMask(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        let mut seen = [false; 9];
        for r in labels.iter().flatten() {
            seen[r.index()] = true;
        }
        for r in Roi::ALL {
            let absent = declared_absent.contains(&r);
            if !seen[r.index()] && !absent {
                return Err(ImagingError::MalformedMask(format!("{r} has no pixels and is not declared absent")));
            }
            if seen[r.index()] && absent {
                return Err(ImagingError::MalformedMask(format!("{r} is declared absent but labels pixels")));
            }
        }
        let mut declared_absent = declared_absent;
        declared_absent.sort();
        declared_absent.dedup();
        Ok(RoiMaskSet { width, height, labels, declared_absent })
    }

    /// Builds a mask from raw ids using the canonical id -> ROI mapping.
    pub fn from_ids(width: usize, height: usize, ids: &[u8], declared_absent: Vec<Roi>) -> Result<Self, ImagingError> {
        let labels = ids
            .iter()
            .map(|&id| match id {
                0 => Ok(None),
                _ => Roi::from_id(id).map(Some).ok_or(ImagingError::UnknownRoi(id)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(width, height, labels, declared_absent)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Option<Roi>] {
        &self.labels
    }

    pub fn label_at(&self, row: usize, col: usize) -> Option<Roi> {
        self.labels[row * self.width + col]
    }

    pub fn declared_absent(&self) -> &[Roi] {
        &self.declared_absent
    }

    /// ROIs covering at least one pixel, in canonical order.
    pub fn present_rois(&self) -> Vec<Roi> {
        Roi::ALL.into_iter().filter(|r| !self.declared_absent.contains(r)).collect()
    }

    pub fn pixel_count(&self, roi: Roi) -> usize {
        self.labels.iter().filter(|l| **l == Some(roi)).count()
    }

    /// Per-pixel ids (0 for unassigned).
    pub fn ids(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.map_or(0, Roi::id)).collect()
    }

    pub fn check_dims<T>(&self, frame: &ThermalFrame<T>) -> Result<(), ImagingError>
    where
        T: Scalar,
    {
        if frame.width() != self.width || frame.height() != self.height {
            return Err(ImagingError::DimensionMismatch {
                frame: (frame.width(), frame.height()),
                mask: (self.width, self.height),
            });
        }
        Ok(())
    }

    /// Writes `<path>` (PGM) and the `.labels` sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<(), ImagingError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut pgm = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        pgm.extend(self.ids());
        fs::write(path, pgm)?;
        let mut side = String::from("# id label\n");
        for r in Roi::ALL {
            if self.declared_absent.contains(&r) {
                side.push_str(&format!("absent {r}\n"));
            } else {
                side.push_str(&format!("{} {r}\n", r.id()));
            }
        }
        fs::write(sidecar_path(path), side)?;
        Ok(())
    }

    /// Loads a PGM mask and its sidecar. Ids in the image are translated
    /// through the sidecar mapping.
    pub fn load(path: &Path) -> Result<Self, ImagingError> {
        let bytes = fs::read(path)?;
        let (width, height, raw) = parse_pgm(&bytes)?;
        let side = fs::read_to_string(sidecar_path(path))?;
        let mut mapping: [Option<Roi>; 256] = [None; 256];
        let mut absent = Vec::new();
        for line in side.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, label) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| ImagingError::MalformedMask(format!("bad sidecar line `{line}`")))?;
            let roi: Roi = label
                .trim()
                .parse()
                .map_err(|e: crate::roi::UnknownRoiLabel| ImagingError::MalformedMask(e.to_string()))?;
            if key == "absent" {
                absent.push(roi);
            } else {
                let id: u8 = key
                    .parse()
                    .map_err(|_| ImagingError::MalformedMask(format!("bad id `{key}`")))?;
                if id == 0 || id > 9 {
                    return Err(ImagingError::UnknownRoi(id));
                }
                mapping[id as usize] = Some(roi);
            }
        }
        let labels = raw
            .iter()
            .map(|&id| match id {
                0 => Ok(None),
                _ => mapping[id as usize].map(Some).ok_or(ImagingError::UnknownRoi(id)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(width, height, labels, absent)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("labels")
}

fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, &[u8]), ImagingError> {
    let bad = |m: &str| ImagingError::MalformedMask(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header number"));
    let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM masks are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
    if raster.len() != w * h {
        return Err(ImagingError::MalformedMask(format!("raster has {} bytes, expected {}", raster.len(), w * h)));
    }
    Ok((w, h, raster))
}

/// Values at the pixels labelled `roi`, in row-major order.
pub fn roi_pixels<T: Scalar>(frame: &ThermalFrame<T>, masks: &RoiMaskSet, roi: Roi) -> Result<Vec<T>, ImagingError> {
    masks.check_dims(frame)?;
    Ok(frame
        .values()
        .iter()
        .zip(masks.labels())
        .filter(|(_, l)| **l == Some(roi))
        .map(|(v, _)| *v)
        .collect())
}

/// As [`roi_pixels`], addressing the ROI by its numeric id.
pub fn roi_pixels_by_id<T: Scalar>(frame: &ThermalFrame<T>, masks: &RoiMaskSet, id: u8) -> Result<Vec<T>, ImagingError> {
    let roi = Roi::from_id(id).ok_or(ImagingError::UnknownRoi(id))?;
    roi_pixels(frame, masks, roi)
}

/// Built-in 64x48 transformer scene used when no mask file is configured.
///
/// Body in the middle, three HV bushings on top, two LV bushings between
/// them and two more on the flanks; everything else is background.
pub fn default_scene_mask() -> RoiMaskSet {
    const W: usize = 64;
    const H: usize = 48;
    let rects: [(Roi, (usize, usize), (usize, usize)); 8] = [
        (Roi::Body, (20, 44), (10, 54)),
        (Roi::In1, (4, 20), (13, 18)),
        (Roi::In2, (4, 20), (29, 34)),
        (Roi::In3, (4, 20), (45, 50)),
        (Roi::Out1, (12, 20), (21, 25)),
        (Roi::Out2, (12, 20), (37, 41)),
        (Roi::Out3, (24, 32), (3, 7)),
        (Roi::Out4, (24, 32), (57, 61)),
    ];
    let mut labels = vec![Some(Roi::Background); W * H];
    for (roi, (r0, r1), (c0, c1)) in rects {
        for r in r0..r1 {
            for c in c0..c1 {
                labels[r * W + c] = Some(roi);
            }
        }
    }
    RoiMaskSet::new(W, H, labels, Vec::new()).expect("built-in mask covers all regions")
}
