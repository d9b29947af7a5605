use super::maxflow::FlowNetwork;
use super::SubmodularQuadratic;
use crate::{BinaryPoint, Result};

/// Exact minimizer of a submodular quadratic via one s-t min-cut.
///
/// Convention: `x_i = 1` iff variable node `i` ends on the source side. A pair
/// term `w x_i x_j` with `w <= 0` is rewritten as `w x_j + (-w)(1 - x_i) x_j`;
/// the second part is an arc `j → i` of capacity `-w`, cut exactly when
/// `x_j = 1, x_i = 0`. Positive unary terms become arcs to the sink, negative
/// ones arcs from the source plus a constant shift.
///
/// The minimizers of a submodular function are closed under intersection, and
/// the residual-reachable source side is the smallest of them. A subset never
/// has a larger integer encoding than its superset, so this is also the
/// minimizer with the smallest encoding.
pub fn graphcut_minimize(q: &SubmodularQuadratic) -> Result<(BinaryPoint, f64)> {
    let n = q.n();
    let (source, sink) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2, source, sink);
    let mut unary = q.linear().to_vec();
    let mut shift = q.constant();

    for i in 0..n {
        for j in i + 1..n {
            let w = q.quadratic()[(i, j)];
            if w < 0.0 {
                unary[j] += w;
                net.add_arc(j, i, -w)?;
            }
        }
    }
    for (j, &u) in unary.iter().enumerate() {
        if u > 0.0 {
            net.add_arc(j, sink, u)?;
        } else if u < 0.0 {
            net.add_arc(source, j, -u)?;
            shift += u;
        }
    }

    let cut = net.max_flow();
    let side = net.source_side();
    let x = BinaryPoint::new(side[..n].to_vec())?;
    let value = q.value(&x)?;
    debug_assert!(
        (cut + shift - value).abs() <= 1e-7 * (1.0 + value.abs()),
        "cut {cut} + {shift} disagrees with energy {value}"
    );
    Ok((x, value))
}
