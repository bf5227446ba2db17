use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetIndex, ImageRecord, Point, PolygonAnnotation};
use crate::taxonomy::{class_from_name, SegmentClass};

/// COCO-style annotation document. Only the fields the toolkit reads are
/// modelled; anything else in the file is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// Polygon rings, each a flat `[x1, y1, x2, y2, ...]` list.
    pub segmentation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

impl CocoDocument {
    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| {
            if e.is_syntax() || e.is_eof() {
                DatasetError::MalformedFile(e.to_string())
            } else {
                DatasetError::SchemaViolation(e.to_string())
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document is always serializable")
    }

    /// Category table with the 25 canonical classes, id = class id.
    pub fn canonical_categories() -> Vec<CocoCategory> {
        SegmentClass::all()
            .map(|c| CocoCategory {
                id: c.id() as u64,
                name: c.name().to_string(),
            })
            .collect()
    }

    pub fn into_index(self) -> Result<DatasetIndex, DatasetError> {
        let mut by_cat: HashMap<u64, SegmentClass> = HashMap::new();
        for cat in &self.categories {
            let class = class_from_name(cat.name.trim())?;
            if by_cat.insert(cat.id, class).is_some() {
                return Err(DatasetError::SchemaViolation(format!(
                    "duplicate category id {}",
                    cat.id
                )));
            }
        }
        let images = self
            .images
            .into_iter()
            .map(|i| ImageRecord::new(i.id, i.width, i.height, i.file_name))
            .collect();
        let annotations = self
            .annotations
            .into_iter()
            .map(|a| {
                let class = *by_cat.get(&a.category_id).ok_or_else(|| {
                    DatasetError::SchemaViolation(format!(
                        "annotation {} uses undeclared category {}",
                        a.id, a.category_id
                    ))
                })?;
                if a.segmentation.is_empty() {
                    return Err(DatasetError::SchemaViolation(format!(
                        "annotation {} has no polygon",
                        a.id
                    )));
                }
                let rings = a
                    .segmentation
                    .iter()
                    .map(|flat| {
                        if flat.len() % 2 != 0 || flat.len() < 6 {
                            return Err(DatasetError::SchemaViolation(format!(
                                "annotation {} has a polygon with {} coordinates",
                                a.id,
                                flat.len()
                            )));
                        }
                        Ok(flat.chunks_exact(2).map(|xy| Point::new(xy[0], xy[1])).collect())
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(PolygonAnnotation {
                    annotation_id: a.id,
                    image_id: a.image_id,
                    class,
                    rings,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        DatasetIndex::new(images, annotations)
    }

    pub fn from_index(index: &DatasetIndex) -> Self {
        Self {
            images: index
                .images()
                .iter()
                .map(|i| CocoImage {
                    id: i.image_id,
                    width: i.width,
                    height: i.height,
                    file_name: i.file_name.clone(),
                })
                .collect(),
            annotations: index
                .annotations()
                .iter()
                .map(|a| CocoAnnotation {
                    id: a.annotation_id,
                    image_id: a.image_id,
                    category_id: a.class.id() as u64,
                    segmentation: a
                        .rings
                        .iter()
                        .map(|r| r.iter().flat_map(|p| [p.x, p.y]).collect())
                        .collect(),
                })
                .collect(),
            categories: Self::canonical_categories(),
        }
    }
}
