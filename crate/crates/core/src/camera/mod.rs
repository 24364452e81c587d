//! Pinhole cameras, per-class likelihood rasters, and the z-buffer that
//! decides which facet owns each pixel.

mod image;
mod raster;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix3x4, Point3, Vector3};
use thiserror::Error;

pub use image::{read_pgm, write_pgm16, write_pgm8, GrayImage, LabelImage, VOID_LABEL};
pub use raster::{
    facet_footprint, labels_from_visibility, rasterize, rasterize_views, render_labels,
    VisibilityMap, BACKGROUND, NEAR_EPS,
};

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("camera file, camera #{index}: {msg}")]
    Parse { index: usize, msg: String },
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("view {view}: {msg}")]
    Mismatch { view: usize, msg: String },
}

impl CameraError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CameraError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A calibrated view: id, image size, and the 3×4 projection matrix mapping
/// homogeneous world points to homogeneous pixel coordinates. Pixel `(x, y)`
/// has its center at image coordinates `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: usize,
    pub width: usize,
    pub height: usize,
    pub projection: Matrix3x4<f64>,
}

impl Camera {
    pub fn new(
        id: usize,
        width: usize,
        height: usize,
        projection: Matrix3x4<f64>,
    ) -> Result<Self, String> {
        if width == 0 || height == 0 {
            return Err(format!("empty image size {width}x{height}"));
        }
        if projection.iter().any(|v| !v.is_finite()) {
            return Err("non-finite projection entry".into());
        }
        // rank 3 <=> P P^T non-singular
        let gram = projection * projection.transpose();
        let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
        if gram.determinant().abs() <= 1e-12 * scale.powi(3) {
            return Err("projection matrix is rank deficient".into());
        }
        Ok(Camera {
            id,
            width,
            height,
            projection,
        })
    }

    /// Pinhole camera from intrinsics and a world-to-camera pose.
    /// The camera looks along its local +z, image x right, image y down.
    pub fn from_pose(
        id: usize,
        width: usize,
        height: usize,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        center: Point3<f64>,
    ) -> Result<Self, String> {
        let t = -(rotation * center.coords);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        rt.set_column(3, &t);
        Camera::new(id, width, height, intrinsics * rt)
    }

    /// Homogeneous image coordinates `(u·w, v·w, w)`; `w` is the depth used
    /// for z-buffering.
    pub fn project_h(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.projection * p.to_homogeneous()
    }

    /// Image coordinates, or `None` when the point is not in front.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        let h = self.project_h(p);
        (h.z > NEAR_EPS).then(|| (h.x / h.z, h.y / h.z))
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Per-pixel, per-class likelihoods of one view, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodRaster {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LikelihoodRaster {
    pub fn new(
        width: usize,
        height: usize,
        classes: usize,
        data: Vec<f64>,
    ) -> Result<Self, String> {
        if data.len() != width * height * classes {
            return Err(format!(
                "expected {} values for {width}x{height}x{classes}, got {}",
                width * height * classes,
                data.len()
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(format!("likelihood {v} outside [0, 1]"));
        }
        Ok(LikelihoodRaster {
            width,
            height,
            classes,
            data,
        })
    }

    /// Assembles a raster from one gray image per class.
    pub fn from_class_images(images: &[GrayImage]) -> Result<Self, String> {
        let first = images.first().ok_or("no class images")?;
        let (w, h) = (first.width, first.height);
        let classes = images.len();
        let mut data = vec![0.0; w * h * classes];
        for (k, img) in images.iter().enumerate() {
            if img.width != w || img.height != h {
                return Err(format!(
                    "class {k} raster is {}x{}, class 0 is {w}x{h}",
                    img.width, img.height
                ));
            }
            for (px, &g) in img.data.iter().enumerate() {
                data[px * classes + k] = g as f64 / img.maxval as f64;
            }
        }
        LikelihoodRaster::new(w, h, classes, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// All class likelihoods of pixel index `px = y * width + x`.
    pub fn pixel(&self, px: usize) -> &[f64] {
        &self.data[px * self.classes..(px + 1) * self.classes]
    }

    pub fn get(&self, x: usize, y: usize, class: usize) -> f64 {
        self.data[(y * self.width + x) * self.classes + class]
    }

    /// One class plane, quantized to 16 bits.
    pub fn class_image(&self, class: usize) -> GrayImage {
        let data = (0..self.width * self.height)
            .map(|px| (self.data[px * self.classes + class] * 65535.0).round() as u16)
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            maxval: 65535,
            data,
        }
    }
}

/// A camera together with the classifier output for its image.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub camera: Camera,
    pub likelihoods: LikelihoodRaster,
}

impl CameraView {
    pub fn new(camera: Camera, likelihoods: LikelihoodRaster) -> Result<Self, CameraError> {
        if likelihoods.width() != camera.width || likelihoods.height() != camera.height {
            return Err(CameraError::Mismatch {
                view: camera.id,
                msg: format!(
                    "likelihood raster is {}x{}, camera is {}x{}",
                    likelihoods.width(),
                    likelihoods.height(),
                    camera.width,
                    camera.height
                ),
            });
        }
        Ok(CameraView {
            camera,
            likelihoods,
        })
    }

    pub fn id(&self) -> usize {
        self.camera.id
    }
}

/// Parses a camera file: per camera `id width height` followed by the 12
/// row-major projection entries. `#` starts a comment.
pub fn parse_cameras(text: &str) -> Result<Vec<Camera>, CameraError> {
    let tokens: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .collect();
    if !tokens.len().is_multiple_of(15) {
        return Err(CameraError::Parse {
            index: tokens.len() / 15,
            msg: format!(
                "truncated block: {} trailing values, expected 15 per camera",
                tokens.len() % 15
            ),
        });
    }
    let mut cams = Vec::with_capacity(tokens.len() / 15);
    for (index, block) in tokens.chunks(15).enumerate() {
        let err = |msg: String| CameraError::Parse { index, msg };
        let int = |t: &str, what: &str| {
            t.parse::<usize>()
                .map_err(|_| err(format!("cannot parse {what} `{t}`")))
        };
        let id = int(block[0], "view id")?;
        let width = int(block[1], "width")?;
        let height = int(block[2], "height")?;
        let mut vals = [0.0; 12];
        for (k, t) in block[3..].iter().enumerate() {
            vals[k] = t
                .parse()
                .map_err(|_| err(format!("cannot parse projection entry `{t}`")))?;
        }
        let projection = Matrix3x4::from_row_slice(&vals);
        if cams.iter().any(|c: &Camera| c.id == id) {
            return Err(err(format!("duplicate view id {id}")));
        }
        cams.push(Camera::new(id, width, height, projection).map_err(err)?);
    }
    Ok(cams)
}

pub fn format_cameras(cams: &[Camera]) -> String {
    let mut s = String::new();
    for c in cams {
        let _ = writeln!(s, "{} {} {}", c.id, c.width, c.height);
        for r in 0..3 {
            let row = c.projection.row(r);
            let _ = writeln!(s, "{} {} {} {}", row[0], row[1], row[2], row[3]);
        }
        s.push('\n');
    }
    s
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>, CameraError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CameraError::io(path, e))?;
    parse_cameras(&text)
}

pub fn likelihood_file_name(view: usize, class: usize) -> String {
    format!("view{view}_class{class}.pgm")
}

pub fn gt_file_name(view: usize) -> String {
    format!("view{view}.pgm")
}

/// Loads `view{ID}_class{K}.pgm` for every camera and class.
pub fn load_views(
    cameras: Vec<Camera>,
    likelihood_dir: impl AsRef<Path>,
    classes: usize,
) -> Result<Vec<CameraView>, CameraError> {
    let dir = likelihood_dir.as_ref();
    cameras
        .into_iter()
        .map(|cam| {
            let images = (0..classes)
                .map(|k| read_pgm(dir.join(likelihood_file_name(cam.id, k))))
                .collect::<Result<Vec<_>, _>>()?;
            let lk = LikelihoodRaster::from_class_images(&images)
                .map_err(|msg| CameraError::Mismatch { view: cam.id, msg })?;
            CameraView::new(cam, lk)
        })
        .collect()
}

/// Writes every class plane of every view into `dir`.
pub fn save_likelihoods(views: &[CameraView], dir: impl AsRef<Path>) -> Result<(), CameraError> {
    let dir = dir.as_ref();
    for v in views {
        for k in 0..v.likelihoods.classes() {
            write_pgm16(
                dir.join(likelihood_file_name(v.id(), k)),
                &v.likelihoods.class_image(k),
            )?;
        }
    }
    Ok(())
}

/// Loads `view{ID}.pgm` ground-truth label images for the given cameras.
pub fn load_ground_truth(
    cameras: &[Camera],
    gt_dir: impl AsRef<Path>,
) -> Result<Vec<LabelImage>, CameraError> {
    let dir = gt_dir.as_ref();
    cameras
        .iter()
        .map(|cam| {
            let path = dir.join(gt_file_name(cam.id));
            let img = read_pgm(&path)?;
            if img.width != cam.width || img.height != cam.height {
                return Err(CameraError::Mismatch {
                    view: cam.id,
                    msg: format!(
                        "ground truth is {}x{}, camera is {}x{}",
                        img.width, img.height, cam.width, cam.height
                    ),
                });
            }
            LabelImage::try_from(img).map_err(|msg| CameraError::Image { path, msg })
        })
        .collect()
}
