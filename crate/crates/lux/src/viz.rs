//! Tree visualization: DOT with HTML-like labels for graph tooling, and a
//! standalone SVG renderer with per-node data distributions, split markers,
//! and the factual/counterfactual paths highlighted.

use thiserror::Error;

use crate::dataset::{FeatureSchema, Instance};
use crate::explain::ExplanationBundle;
use crate::tree::{ExplanationTree, SplitExpr, TrainingSample, TreeNode};

#[derive(Debug, Error)]
pub enum VizError {
    #[error("tree node is missing its data snapshot")]
    MissingSnapshot,
}

/// Colorblind-safe 8-color cycle (Wong palette with grey).
pub const PALETTE: [&str; 8] = [
    "#E69F00", "#56B4E9", "#009E73", "#F0E442", "#0072B2", "#D55E00", "#CC79A7", "#999999",
];

fn class_color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

/// Everything a renderer needs: the tree, the sample its snapshots index
/// into, and the instance (plus optional counterfactual) whose paths get
/// highlighted.
pub struct VizSpec<'a> {
    pub tree: &'a ExplanationTree,
    pub sample: &'a TrainingSample,
    pub schema: &'a FeatureSchema,
    pub instance: &'a Instance,
    pub counterfactual: Option<&'a Instance>,
    pub bins: usize,
}

impl<'a> VizSpec<'a> {
    pub fn from_bundle(bundle: &'a ExplanationBundle, schema: &'a FeatureSchema) -> Self {
        VizSpec {
            tree: &bundle.tree,
            sample: &bundle.sample,
            schema,
            instance: &bundle.x,
            counterfactual: bundle.counterfactuals.first().map(|c| &c.example),
            bins: 20,
        }
    }
}

/// Preorder nodes with ids, depths and parent edges.
struct FlatNode<'a> {
    node: &'a TreeNode,
    depth: usize,
    parent: Option<(usize, bool)>, // (parent id, reached via left branch)
}

fn flatten<'a>(tree: &'a ExplanationTree) -> Vec<FlatNode<'a>> {
    let mut out = Vec::new();
    fn walk<'a>(
        node: &'a TreeNode,
        depth: usize,
        parent: Option<(usize, bool)>,
        out: &mut Vec<FlatNode<'a>>,
    ) {
        let id = out.len();
        out.push(FlatNode { node, depth, parent });
        if let Some(children) = &node.children {
            walk(&children.0, depth + 1, Some((id, true)), out);
            walk(&children.1, depth + 1, Some((id, false)), out);
        }
    }
    walk(&tree.root, 0, None, &mut out);
    out
}

/// Edge ids (child node ids) on the root-to-leaf path of `x`.
fn path_edges(tree: &ExplanationTree, flat: &[FlatNode<'_>], x: &Instance) -> Vec<usize> {
    let mut edges = Vec::new();
    let mut id = 0usize;
    let mut node = &tree.root;
    while let (Some(split), Some(_)) = (&node.split, &node.children) {
        let left = split.goes_left(&x.values);
        // children of `id` in preorder: left child is id+1, right child is
        // id+1+subtree_size(left)
        let left_id = id + 1;
        let right_id = left_id + subtree_size(&node.children.as_ref().unwrap().0);
        let child_id = if left { left_id } else { right_id };
        edges.push(child_id);
        node = flat[child_id].node;
        id = child_id;
    }
    edges
}

fn subtree_size(node: &TreeNode) -> usize {
    match &node.children {
        None => 1,
        Some(c) => 1 + subtree_size(&c.0) + subtree_size(&c.1),
    }
}

fn check_snapshots(tree: &ExplanationTree) -> Result<(), VizError> {
    fn walk(n: &TreeNode) -> Result<(), VizError> {
        if n.data_snapshot.is_empty() {
            return Err(VizError::MissingSnapshot);
        }
        if let Some(c) = &n.children {
            walk(&c.0)?;
            walk(&c.1)?;
        }
        Ok(())
    }
    walk(&tree.root)
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-class histogram of one feature over the snapshot rows.
fn feature_histogram(
    spec: &VizSpec<'_>,
    node: &TreeNode,
    feature: usize,
    bins: usize,
) -> (Vec<Vec<usize>>, f64, f64) {
    let values: Vec<(f64, usize)> = node
        .data_snapshot
        .iter()
        .map(|&r| (spec.sample.rows[r].values[feature], spec.sample.rows[r].pred.label))
        .collect();
    let lo = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut counts = vec![vec![0usize; bins]; spec.tree.n_classes];
    for (v, class) in values {
        let mut b = ((v - lo) / span * bins as f64) as usize;
        if b >= bins {
            b = bins - 1;
        }
        counts[class][b] += 1;
    }
    (counts, lo, hi)
}

fn bin_of(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let span = if hi > lo { hi - lo } else { 1.0 };
    (((value - lo) / span * bins as f64) as usize).min(bins - 1)
}

/// DOT graph with HTML-like node labels: axis nodes embed a binned per-class
/// distribution with the threshold marked; oblique nodes a coarse 2-D grid
/// with the boundary and the instance cell marked.
pub fn to_dot(spec: &VizSpec<'_>) -> Result<String, VizError> {
    check_snapshots(spec.tree)?;
    let flat = flatten(spec.tree);
    let factual = path_edges(spec.tree, &flat, spec.instance);
    let counter = spec
        .counterfactual
        .map(|cf| path_edges(spec.tree, &flat, cf))
        .unwrap_or_default();

    let mut out = String::from("digraph explanation {\n");
    out.push_str("  rankdir=TB;\n  node [shape=plain fontname=\"Helvetica\"];\n");

    for (id, fnode) in flat.iter().enumerate() {
        let label = match &fnode.node.split {
            Some(SplitExpr::Axis { feature, threshold }) => {
                axis_label(spec, fnode.node, *feature, Some(*threshold))
            }
            Some(SplitExpr::Oblique { feature, partner, alpha, beta }) => {
                oblique_label(spec, fnode.node, *feature, *partner, *alpha, *beta)
            }
            None => leaf_label(spec, fnode.node),
        };
        out.push_str(&format!("  n{id} [label=<{label}>];\n"));
    }
    for (id, fnode) in flat.iter().enumerate() {
        if let Some((parent, left)) = fnode.parent {
            let split = flat[parent].node.split.as_ref().expect("parent has a split");
            let cond = html_escape(&split.render_condition(spec.schema, left));
            let style = if factual.contains(&id) {
                " penwidth=3"
            } else if counter.contains(&id) {
                " style=dashed penwidth=2"
            } else {
                ""
            };
            out.push_str(&format!("  n{parent} -> n{id} [label=\"{cond}\"{style}];\n"));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

fn axis_label(spec: &VizSpec<'_>, node: &TreeNode, feature: usize, threshold: Option<f64>) -> String {
    let bins = spec.bins.clamp(4, 24);
    let (counts, lo, hi) = feature_histogram(spec, node, feature, bins);
    let max_count = counts.iter().flatten().copied().max().unwrap_or(1).max(1);
    let mut s = String::from("<table border=\"1\" cellborder=\"0\" cellspacing=\"0\">");
    let title = match threshold {
        Some(t) => format!("{} &lt; {t:.2}", html_escape(&spec.schema.names[feature])),
        None => html_escape(&spec.schema.names[feature]),
    };
    s.push_str(&format!("<tr><td colspan=\"{bins}\"><b>{title}</b></td></tr>"));
    for (class, row) in counts.iter().enumerate() {
        if row.iter().all(|&c| c == 0) {
            continue;
        }
        s.push_str("<tr>");
        for &c in row {
            if c == 0 {
                s.push_str("<td> </td>");
            } else {
                let shade = if 2 * c >= max_count { "" } else { " " };
                s.push_str(&format!(
                    "<td bgcolor=\"{}\">{shade}</td>",
                    class_color(class)
                ));
            }
        }
        s.push_str("</tr>");
    }
    if let Some(t) = threshold {
        let tbin = bin_of(t, lo, hi, bins);
        s.push_str("<tr>");
        for b in 0..bins {
            s.push_str(if b == tbin { "<td>^</td>" } else { "<td> </td>" });
        }
        s.push_str("</tr>");
    }
    s.push_str("</table>");
    s
}

fn oblique_label(
    spec: &VizSpec<'_>,
    node: &TreeNode,
    feature: usize,
    partner: usize,
    alpha: f64,
    beta: f64,
) -> String {
    let grid = 10usize;
    let (_, f1_lo, f1_hi) = feature_histogram(spec, node, feature, grid);
    let (_, f2_lo, f2_hi) = feature_histogram(spec, node, partner, grid);
    // majority class per cell; usize::MAX = empty
    let mut cells = vec![vec![usize::MAX; grid]; grid];
    let mut cell_counts = vec![vec![vec![0usize; spec.tree.n_classes]; grid]; grid];
    for &r in &node.data_snapshot {
        let row = &spec.sample.rows[r];
        let gy = bin_of(row.values[feature], f1_lo, f1_hi, grid);
        let gx = bin_of(row.values[partner], f2_lo, f2_hi, grid);
        cell_counts[gy][gx][row.pred.label] += 1;
    }
    for gy in 0..grid {
        for gx in 0..grid {
            let counts = &cell_counts[gy][gx];
            if counts.iter().any(|&c| c > 0) {
                cells[gy][gx] =
                    (0..counts.len()).max_by_key(|&c| (counts[c], usize::MAX - c)).unwrap_or(0);
            }
        }
    }
    let ix = bin_of(spec.instance.values[partner], f2_lo, f2_hi, grid);
    let iy = bin_of(spec.instance.values[feature], f1_lo, f1_hi, grid);

    let title = format!(
        "{} &lt; {:.2} * {}{:+.2}",
        html_escape(&spec.schema.names[feature]),
        alpha,
        html_escape(&spec.schema.names[partner]),
        beta
    );
    let mut s = String::from("<table border=\"1\" cellborder=\"0\" cellspacing=\"0\">");
    s.push_str(&format!("<tr><td colspan=\"{grid}\"><b>{title}</b></td></tr>"));
    // rows top-down: highest f1 bin first
    for gy in (0..grid).rev() {
        s.push_str("<tr>");
        for gx in 0..grid {
            let f2_mid = f2_lo + (gx as f64 + 0.5) / grid as f64 * (f2_hi - f2_lo).max(1e-12);
            let f1_mid = f1_lo + (gy as f64 + 0.5) / grid as f64 * (f1_hi - f1_lo).max(1e-12);
            let f1_cell = (f1_hi - f1_lo).max(1e-12) / grid as f64;
            let on_boundary = (f1_mid - (alpha * f2_mid + beta)).abs() <= f1_cell;
            let marker = if gy == iy && gx == ix { "x" } else { " " };
            match (on_boundary, cells[gy][gx]) {
                (true, _) => s.push_str(&format!("<td bgcolor=\"#333333\">{marker}</td>")),
                (false, usize::MAX) => s.push_str(&format!("<td>{marker}</td>")),
                (false, class) => s.push_str(&format!(
                    "<td bgcolor=\"{}\">{marker}</td>",
                    class_color(class)
                )),
            }
        }
        s.push_str("</tr>");
    }
    s.push_str("</table>");
    s
}

fn leaf_label(spec: &VizSpec<'_>, node: &TreeNode) -> String {
    let mut s = String::from("<table border=\"1\" cellborder=\"0\" cellspacing=\"0\">");
    let total: f64 = node.class_hist.iter().sum();
    s.push_str(&format!(
        "<tr><td><b>class = {} # {:.2}</b></td></tr>",
        html_escape(&spec.schema.class_name(node.majority)),
        node.leaf_confidence
    ));
    for (class, &mass) in node.class_hist.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        s.push_str(&format!(
            "<tr><td bgcolor=\"{}\">{}: {:.2} ({:.0}%)</td></tr>",
            class_color(class),
            html_escape(&spec.schema.class_name(class)),
            mass,
            100.0 * mass / total
        ));
    }
    s.push_str("</table>");
    s
}

const NODE_W: f64 = 180.0;
const NODE_H: f64 = 110.0;
const SLOT_W: f64 = 200.0;
const LEVEL_H: f64 = 180.0;
const MARGIN: f64 = 30.0;

/// Standalone SVG: top-down recursive layout, axis nodes as stacked
/// histograms with a split line, oblique nodes as class-colored scatter
/// plots with the boundary line, instance and counterfactual markers along
/// their paths, and a class legend. Output bytes are deterministic.
pub fn to_svg(spec: &VizSpec<'_>) -> Result<String, VizError> {
    check_snapshots(spec.tree)?;
    let flat = flatten(spec.tree);
    let factual = path_edges(spec.tree, &flat, spec.instance);
    let counter = spec
        .counterfactual
        .map(|cf| path_edges(spec.tree, &flat, cf))
        .unwrap_or_default();

    // leaves get consecutive slots; internal nodes center over their children
    let mut xs = vec![0.0f64; flat.len()];
    let mut next_slot = 0usize;
    assign_x(&flat, 0, &mut next_slot, &mut xs);
    let depth_max = flat.iter().map(|f| f.depth).max().unwrap_or(0);
    let width = MARGIN * 2.0 + next_slot as f64 * SLOT_W;
    let height = MARGIN * 2.0 + (depth_max + 1) as f64 * LEVEL_H + 40.0;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let pos = |id: usize| -> (f64, f64) {
        (MARGIN + xs[id], MARGIN + flat[id].depth as f64 * LEVEL_H)
    };

    // edges first, under the nodes
    for (id, fnode) in flat.iter().enumerate() {
        if let Some((parent, left)) = fnode.parent {
            let (px, py) = pos(parent);
            let (cx, cy) = pos(id);
            let (style, dash) = if factual.contains(&id) {
                ("stroke=\"black\" stroke-width=\"3\"", "")
            } else if counter.contains(&id) {
                ("stroke=\"#0072B2\" stroke-width=\"2\"", " stroke-dasharray=\"6,4\"")
            } else {
                ("stroke=\"#aaaaaa\" stroke-width=\"1\"", "")
            };
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" {style}{dash}/>\n",
                px,
                py + NODE_H / 2.0,
                cx,
                cy - NODE_H / 2.0
            ));
            let split = flat[parent].node.split.as_ref().expect("parent has a split");
            let cond = xml_escape(&split.render_condition(spec.schema, left));
            let (mx, my) = ((px + cx) / 2.0, (py + cy) / 2.0 + 4.0);
            svg.push_str(&format!(
                "<text x=\"{mx:.1}\" y=\"{my:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">{cond}</text>\n"
            ));
        }
    }

    for (id, fnode) in flat.iter().enumerate() {
        let (cx, cy) = pos(id);
        let x0 = cx - NODE_W / 2.0;
        let y0 = cy - NODE_H / 2.0;
        svg.push_str(&format!(
            "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{NODE_W}\" height=\"{NODE_H}\" fill=\"white\" stroke=\"black\"/>\n"
        ));
        let on_factual = id == 0 || factual.contains(&id);
        let on_counter = id == 0 || counter.contains(&id);
        match &fnode.node.split {
            Some(SplitExpr::Axis { feature, threshold }) => {
                svg_axis_node(spec, fnode.node, *feature, *threshold, x0, y0, on_factual, on_counter, &mut svg)
            }
            Some(SplitExpr::Oblique { feature, partner, alpha, beta }) => svg_oblique_node(
                spec, fnode.node, *feature, *partner, *alpha, *beta, x0, y0, on_factual, on_counter, &mut svg,
            ),
            None => svg_leaf_node(spec, fnode.node, x0, y0, &mut svg),
        }
    }

    // legend: classes present at the root
    let mut present: Vec<usize> = (0..spec.tree.n_classes)
        .filter(|&c| spec.tree.root.class_hist[c] > 0.0)
        .collect();
    present.sort_unstable();
    let ly = height - 25.0;
    let mut lx = MARGIN;
    for class in present {
        svg.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            ly - 10.0,
            class_color(class)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            lx + 16.0,
            xml_escape(&spec.schema.class_name(class))
        ));
        lx += 110.0;
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn assign_x(flat: &[FlatNode<'_>], id: usize, next_slot: &mut usize, xs: &mut [f64]) {
    match &flat[id].node.children {
        None => {
            xs[id] = (*next_slot as f64 + 0.5) * SLOT_W;
            *next_slot += 1;
        }
        Some(c) => {
            let left_id = id + 1;
            let right_id = left_id + subtree_size(&c.0);
            assign_x(flat, left_id, next_slot, xs);
            assign_x(flat, right_id, next_slot, xs);
            xs[id] = (xs[left_id] + xs[right_id]) / 2.0;
        }
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[allow(clippy::too_many_arguments)]
fn svg_axis_node(
    spec: &VizSpec<'_>,
    node: &TreeNode,
    feature: usize,
    threshold: f64,
    x0: f64,
    y0: f64,
    mark_instance: bool,
    mark_counter: bool,
    svg: &mut String,
) {
    let bins = spec.bins.max(2);
    let (counts, lo, hi) = feature_histogram(spec, node, feature, bins);
    let span = (hi - lo).max(1e-12);
    let title = format!("{} < {:.2}", spec.schema.names[feature], threshold);
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
        x0 + NODE_W / 2.0,
        y0 + 14.0,
        xml_escape(&title)
    ));
    let plot_x = x0 + 10.0;
    let plot_y = y0 + 22.0;
    let plot_w = NODE_W - 20.0;
    let plot_h = NODE_H - 34.0;
    let max_stack = (0..bins)
        .map(|b| counts.iter().map(|row| row[b]).sum::<usize>())
        .max()
        .unwrap_or(1)
        .max(1);
    let bw = plot_w / bins as f64;
    for b in 0..bins {
        let mut acc = 0.0;
        for (class, row) in counts.iter().enumerate() {
            if row[b] == 0 {
                continue;
            }
            let h = row[b] as f64 / max_stack as f64 * plot_h;
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>\n",
                plot_x + b as f64 * bw,
                plot_y + plot_h - acc - h,
                bw.max(1.0),
                h,
                class_color(class)
            ));
            acc += h;
        }
    }
    // split line at the threshold, in data coordinates
    let tx = plot_x + ((threshold - lo) / span).clamp(0.0, 1.0) * plot_w;
    svg.push_str(&format!(
        "<line x1=\"{tx:.1}\" y1=\"{plot_y:.1}\" x2=\"{tx:.1}\" y2=\"{:.1}\" stroke=\"red\" stroke-width=\"2\" stroke-dasharray=\"4,3\"/>\n",
        plot_y + plot_h
    ));
    if mark_instance {
        let ix = plot_x + ((spec.instance.values[feature] - lo) / span).clamp(0.0, 1.0) * plot_w;
        svg.push_str(&format!(
            "<circle cx=\"{ix:.1}\" cy=\"{:.1}\" r=\"5\" fill=\"red\" stroke=\"black\"/>\n",
            plot_y + plot_h
        ));
    }
    if mark_counter {
        if let Some(cf) = spec.counterfactual {
            let ix = plot_x + ((cf.values[feature] - lo) / span).clamp(0.0, 1.0) * plot_w;
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"8\" height=\"8\" fill=\"#0072B2\" stroke=\"black\"/>\n",
                ix - 4.0,
                plot_y + plot_h - 4.0
            ));
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn svg_oblique_node(
    spec: &VizSpec<'_>,
    node: &TreeNode,
    feature: usize,
    partner: usize,
    alpha: f64,
    beta: f64,
    x0: f64,
    y0: f64,
    mark_instance: bool,
    mark_counter: bool,
    svg: &mut String,
) {
    let title = format!(
        "{} < {:.2} * {}{:+.2}",
        spec.schema.names[feature], alpha, spec.schema.names[partner], beta
    );
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
        x0 + NODE_W / 2.0,
        y0 + 14.0,
        xml_escape(&title)
    ));
    let plot_x = x0 + 10.0;
    let plot_y = y0 + 22.0;
    let plot_w = NODE_W - 20.0;
    let plot_h = NODE_H - 34.0;

    // data ranges over the snapshot, instance included so markers stay inside
    let mut f1_lo = spec.instance.values[feature];
    let mut f1_hi = f1_lo;
    let mut f2_lo = spec.instance.values[partner];
    let mut f2_hi = f2_lo;
    for &r in &node.data_snapshot {
        let v = &spec.sample.rows[r].values;
        f1_lo = f1_lo.min(v[feature]);
        f1_hi = f1_hi.max(v[feature]);
        f2_lo = f2_lo.min(v[partner]);
        f2_hi = f2_hi.max(v[partner]);
    }
    let s1 = (f1_hi - f1_lo).max(1e-12);
    let s2 = (f2_hi - f2_lo).max(1e-12);
    let px = |f2: f64| plot_x + (f2 - f2_lo) / s2 * plot_w;
    let py = |f1: f64| plot_y + plot_h - (f1 - f1_lo) / s1 * plot_h;

    for &r in &node.data_snapshot {
        let row = &spec.sample.rows[r];
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"{}\"/>\n",
            px(row.values[partner]),
            py(row.values[feature]),
            class_color(row.pred.label)
        ));
    }
    // boundary f1 = alpha*f2 + beta drawn across the f2 range
    let (bx1, by1) = (px(f2_lo), py(alpha * f2_lo + beta));
    let (bx2, by2) = (px(f2_hi), py(alpha * f2_hi + beta));
    svg.push_str(&format!(
        "<line x1=\"{bx1:.1}\" y1=\"{by1:.1}\" x2=\"{bx2:.1}\" y2=\"{by2:.1}\" stroke=\"red\" stroke-width=\"2\"/>\n"
    ));
    if mark_instance {
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"5\" fill=\"red\" stroke=\"black\"/>\n",
            px(spec.instance.values[partner]),
            py(spec.instance.values[feature])
        ));
    }
    if mark_counter {
        if let Some(cf) = spec.counterfactual {
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"8\" height=\"8\" fill=\"#0072B2\" stroke=\"black\"/>\n",
                px(cf.values[partner]) - 4.0,
                py(cf.values[feature]) - 4.0
            ));
        }
    }
}

fn svg_leaf_node(spec: &VizSpec<'_>, node: &TreeNode, x0: f64, y0: f64, svg: &mut String) {
    let title = format!(
        "class = {} # {:.2}",
        spec.schema.class_name(node.majority),
        node.leaf_confidence
    );
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>\n",
        x0 + NODE_W / 2.0,
        y0 + 14.0,
        xml_escape(&title)
    ));
    // one stacked horizontal bar of class masses
    let total: f64 = node.class_hist.iter().sum::<f64>().max(1e-12);
    let bar_x = x0 + 10.0;
    let bar_y = y0 + NODE_H / 2.0;
    let bar_w = NODE_W - 20.0;
    let mut acc = 0.0;
    for (class, &mass) in node.class_hist.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let w = mass / total * bar_w;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{bar_y:.1}\" width=\"{w:.1}\" height=\"24\" fill=\"{}\"/>\n",
            bar_x + acc,
            class_color(class)
        ));
        acc += w;
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">rows: {}</text>\n",
        x0 + NODE_W / 2.0,
        bar_y + 40.0,
        node.n_rows
    ));
}
