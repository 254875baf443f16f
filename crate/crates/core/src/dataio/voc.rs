//! Reader for PASCAL VOC annotation XML files.

use std::fs;
use std::path::Path;

use roxmltree::{Document, Node};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct VocObject {
    pub name: String,
    /// Half-open box: the inclusive VOC max corner shifted by one pixel.
    pub bbox: BBox,
    pub difficult: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocAnnotation {
    pub filename: Option<String>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub objects: Vec<VocObject>,
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn text<'a>(node: Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

fn err_at(doc: &Document, node: Node, message: String) -> Error {
    Error::Parse {
        line: doc.text_pos_at(node.range().start).row as usize,
        message,
    }
}

fn number(doc: &Document, node: Node, name: &str) -> Result<f64> {
    let raw = text(node, name).ok_or_else(|| err_at(doc, node, format!("missing <{name}>")))?;
    raw.parse::<f64>()
        .map_err(|_| err_at(doc, node, format!("<{name}> is not a number: {raw:?}")))
}

pub fn parse_voc_str(xml: &str) -> Result<VocAnnotation> {
    let doc = Document::parse(xml).map_err(|e| Error::Parse {
        line: e.pos().row as usize,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(err_at(
            &doc,
            root,
            format!(
                "root element is <{}>, expected <annotation>",
                root.tag_name().name()
            ),
        ));
    }
    let size = child(root, "size");
    let dim = |name: &str| -> Option<u32> { size.and_then(|s| text(s, name)?.parse().ok()) };

    let mut objects = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let name = text(obj, "name")
            .ok_or_else(|| err_at(&doc, obj, "object without <name>".into()))?
            .to_string();
        let difficult = match text(obj, "difficult") {
            None | Some("0") | Some("") => false,
            Some("1") => true,
            Some(other) => {
                return Err(err_at(
                    &doc,
                    obj,
                    format!("bad <difficult> value {other:?}"),
                ))
            }
        };
        let bnd = child(obj, "bndbox")
            .ok_or_else(|| err_at(&doc, obj, "object without <bndbox>".into()))?;
        let bbox = BBox::from_inclusive_pixels(
            number(&doc, bnd, "xmin")?,
            number(&doc, bnd, "ymin")?,
            number(&doc, bnd, "xmax")?,
            number(&doc, bnd, "ymax")?,
        )
        .map_err(|e| err_at(&doc, bnd, e.to_string()))?;
        objects.push(VocObject {
            name,
            bbox,
            difficult,
        });
    }
    Ok(VocAnnotation {
        filename: text(root, "filename").map(str::to_string),
        width: dim("width"),
        height: dim("height"),
        objects,
    })
}

pub fn parse_voc_annotation(path: impl AsRef<Path>) -> Result<VocAnnotation> {
    parse_voc_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifts_inclusive_corner() {
        let xml = "<annotation><object><name>cat</name><bndbox>\
                   <xmin>1</xmin><ymin>1</ymin><xmax>10</xmax><ymax>10</ymax>\
                   </bndbox></object></annotation>";
        let ann = parse_voc_str(xml).unwrap();
        assert_eq!(ann.objects.len(), 1);
        assert_eq!(<[f64; 4]>::from(ann.objects[0].bbox), [1., 1., 11., 11.]);
        assert!(!ann.objects[0].difficult);
    }

    #[test]
    fn zero_objects() {
        let ann = parse_voc_str("<annotation><filename>x.jpg</filename></annotation>").unwrap();
        assert!(ann.objects.is_empty());
        assert_eq!(ann.filename.as_deref(), Some("x.jpg"));
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(
            parse_voc_str("<annotation>"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(parse_voc_str("<foo/>"), Err(Error::Parse { .. })));
        let no_box = "<annotation><object><name>cat</name></object></annotation>";
        assert!(matches!(parse_voc_str(no_box), Err(Error::Parse { .. })));
        let nan = "<annotation><object><name>cat</name><bndbox><xmin>a</xmin>\
                   <ymin>1</ymin><xmax>2</xmax><ymax>2</ymax></bndbox></object></annotation>";
        assert!(matches!(parse_voc_str(nan), Err(Error::Parse { .. })));
    }
}
