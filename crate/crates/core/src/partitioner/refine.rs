use alloc::vec::Vec;
use core::ops::Range;

/// What happened at one node of the recursive gap refinement.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutcome {
    /// Fewer than two elements.
    Trivial,
    /// Span below the minimum width; not examined.
    WidthStop,
    /// No gap exceeded the threshold.
    NoSignificantGap { mean_gap: f64, threshold: f64 },
    /// Split before each listed position (relative to the node start).
    Split { mean_gap: f64, threshold: f64, cuts: Vec<usize> },
}

/// One recursion node: a range of the refined cluster and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitNode {
    pub range: Range<usize>,
    pub outcome: NodeOutcome,
}

/// Recursively splits a sorted cluster at significant gaps.
///
/// At each node the consecutive gaps `G` between the node's distinct values
/// are computed and the node is cut at every gap strictly greater than
/// `alpha * mean(G)`; each piece is refined again. Repeated lengths add no
/// zero gaps. A node stops when it has
/// no such gap or spans fewer than `min_width` tokens. The returned ranges
/// partition `0..cluster.len()` in order.
pub fn refine_cluster(cluster: &[u32], alpha: f64, min_width: u32) -> Vec<Range<usize>> {
    refine(cluster, alpha, min_width, None)
}

/// [`refine_cluster`] that also returns every visited node in visit order.
pub fn refine_cluster_traced(
    cluster: &[u32],
    alpha: f64,
    min_width: u32,
) -> (Vec<Range<usize>>, Vec<SplitNode>) {
    let mut trace = Vec::new();
    let pieces = refine(cluster, alpha, min_width, Some(&mut trace));
    (pieces, trace)
}

fn refine(
    cluster: &[u32],
    alpha: f64,
    min_width: u32,
    mut trace: Option<&mut Vec<SplitNode>>,
) -> Vec<Range<usize>> {
    debug_assert!(cluster.windows(2).all(|w| w[0] <= w[1]));
    let mut out = Vec::new();
    if cluster.is_empty() {
        return out;
    }
    let mut stack = Vec::new();
    stack.push(0..cluster.len());
    while let Some(node) = stack.pop() {
        let outcome = examine(&cluster[node.clone()], alpha, min_width);
        let cuts = match &outcome {
            NodeOutcome::Split { cuts, .. } => Some(cuts.clone()),
            _ => None,
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(SplitNode { range: node.clone(), outcome });
        }
        match cuts {
            None => out.push(node),
            Some(cuts) => {
                let mut bounds = Vec::with_capacity(cuts.len() + 2);
                bounds.push(0);
                bounds.extend(cuts);
                bounds.push(node.len());
                for w in bounds.windows(2).rev() {
                    stack.push(node.start + w[0]..node.start + w[1]);
                }
            }
        }
    }
    out
}

fn examine(values: &[u32], alpha: f64, min_width: u32) -> NodeOutcome {
    if values.len() < 2 {
        return NodeOutcome::Trivial;
    }
    let span = values[values.len() - 1] - values[0];
    if span < min_width {
        return NodeOutcome::WidthStop;
    }
    let distinct = 1 + values.windows(2).filter(|w| w[1] != w[0]).count();
    let mean_gap = f64::from(span) / (distinct - 1) as f64;
    let threshold = alpha * mean_gap;
    let cuts: Vec<usize> = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| f64::from(w[1] - w[0]) > threshold)
        .map(|(j, _)| j + 1)
        .collect();
    if cuts.is_empty() {
        NodeOutcome::NoSignificantGap { mean_gap, threshold }
    } else {
        NodeOutcome::Split { mean_gap, threshold, cuts }
    }
}
