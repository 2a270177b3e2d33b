//! PASCAL VOC style XML annotations, one file per image.
//!
//! Object names follow `brand[-text][-N]`: a `-text` marker means a textual
//! logo, a trailing `-N` selects design variant `N` (default 0).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BrandLabel, Dataset, ImageRecord, LogoKind, Roi};
use crate::error::{Error, Result};
use crate::geometry::BBox;

const TEXT_MARKER: &str = "-text";

/// Splits a VOC object name into its brand label.
pub fn parse_object_name(name: &str) -> Option<BrandLabel> {
    let mut rest = name.trim().to_lowercase();
    let mut variant = 0;
    if let Some((head, tail)) = rest.rsplit_once('-') {
        if !head.is_empty() && !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(v) = tail.parse() {
                variant = v;
                rest = head.to_string();
            }
        }
    }
    let kind = match rest.strip_suffix(TEXT_MARKER) {
        Some(head) if !head.is_empty() => {
            rest = head.to_string();
            LogoKind::Textual
        }
        _ => LogoKind::Graphical,
    };
    BrandLabel::new(&rest, kind, variant)
}

pub fn object_name(label: &BrandLabel) -> String {
    let mut name = label.brand().to_string();
    if label.kind == LogoKind::Textual {
        name.push_str(TEXT_MARKER);
    }
    if label.variant > 0 {
        write!(name, "-{}", label.variant).unwrap();
    }
    name
}

/// Reads every `*.xml` file directly inside `dir`, in file-name order.
///
/// The image id is the XML file stem.
pub fn import_voc_xml(dir: &Path) -> Result<Dataset> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|ext| ext.eq_ignore_ascii_case("xml"))
        })
        .collect();
    files.sort();

    let images = files
        .iter()
        .map(|p| read_voc_file(p))
        .collect::<Result<Vec<_>>>()?;
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, "", images)
}

fn read_voc_file(path: &Path) -> Result<ImageRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let image_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_voc(&text, &image_id).map_err(|message| Error::Xml {
        path: path.to_path_buf(),
        message,
    })
    .and_then(|record| {
        record.validate()?;
        Ok(record)
    })
}

fn child_text<'a>(node: roxmltree::Node<'a, '_>, tag: &str) -> Option<&'a str> {
    node.children()
        .find(|c| c.has_tag_name(tag))
        .and_then(|c| c.text())
        .map(str::trim)
}

fn child_number(node: roxmltree::Node<'_, '_>, tag: &str) -> std::result::Result<u32, String> {
    let raw = child_text(node, tag).ok_or_else(|| format!("missing <{tag}>"))?;
    let value: f64 = raw
        .parse()
        .map_err(|_| format!("<{tag}> is not a number: {raw:?}"))?;
    if !value.is_finite() || value < 0.0 || value > f64::from(u32::MAX) {
        return Err(format!("<{tag}> out of range: {raw}"));
    }
    Ok(value.round() as u32)
}

fn parse_voc(text: &str, image_id: &str) -> std::result::Result<ImageRecord, String> {
    let doc = roxmltree::Document::parse(text).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    let size = root
        .children()
        .find(|c| c.has_tag_name("size"))
        .ok_or("missing <size>")?;
    let width = child_number(size, "width")?;
    let height = child_number(size, "height")?;
    let path = child_text(root, "filename")
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| format!("{image_id}.jpg"));

    let mut rois = Vec::new();
    for object in root.children().filter(|c| c.has_tag_name("object")) {
        let name = child_text(object, "name").ok_or("object without <name>")?;
        let label = parse_object_name(name).ok_or_else(|| format!("empty object name {name:?}"))?;
        let bndbox = object
            .children()
            .find(|c| c.has_tag_name("bndbox"))
            .ok_or("object without <bndbox>")?;
        let (xmin, ymin) = (child_number(bndbox, "xmin")?, child_number(bndbox, "ymin")?);
        let (xmax, ymax) = (child_number(bndbox, "xmax")?, child_number(bndbox, "ymax")?);
        if xmax <= xmin || ymax <= ymin {
            return Err(format!(
                "degenerate bndbox for {name:?}: ({xmin}, {ymin}, {xmax}, {ymax})"
            ));
        }
        let bbox = BBox::new(xmin, ymin, xmax - xmin, ymax - ymin).expect("positive extent");
        rois.push(Roi { bbox, label });
    }

    Ok(ImageRecord {
        image_id: image_id.to_string(),
        path,
        width,
        height,
        rois,
    })
}

/// Writes one `<image_id>.xml` per image into `dir`, creating it if needed.
pub fn export_voc_xml(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for image in dataset.images() {
        let path = dir.join(format!("{}.xml", image.image_id));
        fs::write(&path, render_voc(image)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn render_voc(image: &ImageRecord) -> String {
    let mut s = String::new();
    s.push_str("<annotation>\n");
    writeln!(s, "  <filename>{}</filename>", escape(&image.path)).unwrap();
    writeln!(
        s,
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>",
        image.width, image.height
    )
    .unwrap();
    for roi in &image.rois {
        let b = roi.bbox;
        writeln!(
            s,
            "  <object>\n    <name>{}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>",
            escape(&object_name(&roi.label)),
            b.x,
            b.y,
            b.right(),
            b.bottom()
        )
        .unwrap();
    }
    s.push_str("</annotation>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
