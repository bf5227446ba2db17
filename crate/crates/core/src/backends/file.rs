use std::path::{Path, PathBuf};

use super::{BackendError, SegmentationBackend};
use crate::dataset::ImageRecord;
use crate::fusion::{read_pstk_file, ProbabilityStack, PstkError};
use crate::taxonomy::VesselGroup;

/// Serves externally computed stacks stored as `<dir>/<image_id>.pstk`.
#[derive(Debug, Clone)]
pub struct FileSegmentation {
    dir: PathBuf,
}

impl FileSegmentation {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stack_path(&self, image_id: u64) -> PathBuf {
        self.dir.join(format!("{image_id}.pstk"))
    }
}

impl SegmentationBackend for FileSegmentation {
    fn segment(&self, image: &ImageRecord, group: VesselGroup) -> Result<ProbabilityStack, BackendError> {
        let path = self.stack_path(image.image_id);
        let stack = match read_pstk_file(&path) {
            Ok(s) => s,
            Err(PstkError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::MissingStack {
                    image_id: image.image_id,
                    path: path.display().to_string(),
                })
            }
            Err(source) => {
                return Err(BackendError::CorruptStack {
                    image_id: image.image_id,
                    source,
                })
            }
        };
        if stack.group() != group {
            return Err(BackendError::ClassListMismatch {
                image_id: image.image_id,
                expected: group,
                found: stack.group(),
            });
        }
        if (stack.width(), stack.height()) != (image.width, image.height) {
            return Err(BackendError::ShapeMismatch {
                image_id: image.image_id,
                width: image.width,
                height: image.height,
                found_w: stack.width(),
                found_h: stack.height(),
            });
        }
        Ok(stack)
    }
}
