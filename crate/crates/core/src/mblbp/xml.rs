//! Importer for the stage-classifier XML layout emitted by common cascade
//! training tools (`<cascade>` with `featureType` LBP and stump weak nodes).

use roxmltree::{Document, Node};

use super::{CascadeModel, CodeSubset, MbLbpError, MbLbpFeature, Stage, WeakClassifier};

/// How subset bits in an imported file map to canonical LBP codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CodeOrder {
    /// The file uses the canonical TL-clockwise order (TL = bit 7).
    #[default]
    Canonical,
    /// The file numbers neighbor bits in the opposite direction (TL = bit 0).
    Reversed,
}

impl CodeOrder {
    fn remap(self, subset: CodeSubset) -> CodeSubset {
        match self {
            CodeOrder::Canonical => subset,
            CodeOrder::Reversed => {
                CodeSubset::from_codes((0..=255u8).filter(|c| subset.contains(c.reverse_bits())))
            }
        }
    }
}

pub fn import_cascade_xml(text: &str) -> Result<CascadeModel, MbLbpError> {
    import_cascade_xml_with(text, CodeOrder::Canonical)
}

pub fn import_cascade_xml_with(text: &str, order: CodeOrder) -> Result<CascadeModel, MbLbpError> {
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        MbLbpError::Xml {
            line: pos.row,
            col: pos.col,
            msg: e.to_string(),
        }
    })?;
    let cx = Ctx { doc: &doc };
    let cascade = doc
        .descendants()
        .find(|n| n.has_tag_name("cascade"))
        .ok_or_else(|| MbLbpError::Parse("no <cascade> element".into()))?;

    let feature_type = cx.text(cx.child(cascade, "featureType")?);
    if !feature_type.eq_ignore_ascii_case("LBP") {
        return Err(MbLbpError::Unsupported(format!("featureType {feature_type} (only LBP is supported)")));
    }
    if let Some(st) = cascade.children().find(|n| n.has_tag_name("stageType")) {
        let st = cx.text(st);
        if !st.eq_ignore_ascii_case("BOOST") {
            return Err(MbLbpError::Unsupported(format!("stageType {st}")));
        }
    }
    let width: u32 = cx.scalar(cx.child(cascade, "width")?)?;
    let height: u32 = cx.scalar(cx.child(cascade, "height")?)?;

    let mut stages = Vec::new();
    for (si, stage) in cx.items(cx.child(cascade, "stages")?).enumerate() {
        let max_weak: usize = cx.scalar(cx.child(stage, "maxWeakCount")?)?;
        let threshold: f64 = cx.scalar(cx.child(stage, "stageThreshold")?)?;
        let mut weaks = Vec::new();
        for weak in cx.items(cx.child(stage, "weakClassifiers")?) {
            let nodes_el = cx.child(weak, "internalNodes")?;
            let nodes: Vec<i64> = cx.numbers(nodes_el)?;
            if nodes.len() != 11 {
                return Err(MbLbpError::Unsupported(format!(
                    "stage {si}: weak classifier with {} internal-node values; only single-split stumps (11 values) are supported",
                    nodes.len()
                )));
            }
            let leaves_el = cx.child(weak, "leafValues")?;
            let leaves: Vec<f64> = cx.numbers(leaves_el)?;
            if leaves.len() != 2 {
                return Err(cx.err(leaves_el, format!("expected 2 leaf values, found {}", leaves.len())));
            }
            if nodes[2] < 0 {
                return Err(cx.err(nodes_el, format!("negative feature index {}", nodes[2])));
            }
            let mut words = [0u32; 8];
            for (w, &v) in words.iter_mut().zip(&nodes[3..]) {
                // subset words are commonly written as signed 32-bit integers
                if v < i32::MIN as i64 || v > u32::MAX as i64 {
                    return Err(cx.err(nodes_el, format!("subset word {v} out of 32-bit range")));
                }
                *w = v as u32;
            }
            weaks.push(WeakClassifier {
                feature_index: nodes[2] as usize,
                subset: order.remap(CodeSubset(words)),
                leaf_in: leaves[0],
                leaf_out: leaves[1],
            });
        }
        if weaks.len() != max_weak {
            return Err(MbLbpError::Parse(format!(
                "stage {si}: maxWeakCount {max_weak} but {} weak classifiers",
                weaks.len()
            )));
        }
        stages.push(Stage { threshold, weaks });
    }

    let mut features = Vec::new();
    for feat in cx.items(cx.child(cascade, "features")?) {
        let rect_el = cx.child(feat, "rect")?;
        let v: Vec<u32> = cx.numbers(rect_el)?;
        if v.len() != 4 {
            return Err(cx.err(rect_el, format!("expected 4 rect values, found {}", v.len())));
        }
        features.push(MbLbpFeature::new(v[0], v[1], v[2], v[3]));
    }

    CascadeModel::new(width, height, features, stages)
}

struct Ctx<'a, 'i> {
    doc: &'a Document<'i>,
}

impl<'a, 'i> Ctx<'a, 'i> {
    fn err(&self, node: Node, msg: String) -> MbLbpError {
        let pos = self.doc.text_pos_at(node.range().start);
        MbLbpError::Xml {
            line: pos.row,
            col: pos.col,
            msg: format!("<{}>: {msg}", node.tag_name().name()),
        }
    }

    fn child(&self, parent: Node<'a, 'i>, name: &str) -> Result<Node<'a, 'i>, MbLbpError> {
        parent
            .children()
            .find(|n| n.has_tag_name(name))
            .ok_or_else(|| self.err(parent, format!("missing <{name}>")))
    }

    fn items(&self, parent: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
        parent.children().filter(|n| n.is_element())
    }

    fn text(&self, node: Node) -> String {
        node.text().unwrap_or("").trim().to_string()
    }

    fn scalar<T: std::str::FromStr>(&self, node: Node) -> Result<T, MbLbpError> {
        let t = self.text(node);
        t.parse().map_err(|_| self.err(node, format!("malformed number {t:?}")))
    }

    fn numbers<T: std::str::FromStr>(&self, node: Node) -> Result<Vec<T>, MbLbpError> {
        node.text()
            .unwrap_or("")
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(node, format!("malformed number {t:?}"))))
            .collect()
    }
}
