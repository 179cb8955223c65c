use super::graph::{Graph, Var};
use super::tensor::{ShapeError, Tensor};
use crate::fmath;

/// Dot-product attention of one query over encoder states.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionState {
    /// `1 x N` alignment weights.
    pub alignment: Tensor,
    /// `1 x H` weighted sum of encoder states.
    pub context: Tensor,
    /// `1 x H` value of `tanh([context; h] · w_c)`.
    pub attended: Tensor,
}

/// `h_t` is `1 x H`, `encoder` is `N x H`, `w_c` is `2H x H`.
pub fn attention(h_t: &Tensor, encoder: &Tensor, w_c: &Tensor) -> Result<AttentionState, ShapeError> {
    let scores = h_t.matmul_bt(encoder)?;
    let alignment = scores.softmax_rows();
    let context = alignment.matmul(encoder)?;
    let mut cat = context.data().to_vec();
    cat.extend_from_slice(h_t.data());
    let cat = Tensor::new(1, cat.len(), cat).unwrap();
    let attended = cat.matmul(w_c)?.map(fmath::tanh);
    Ok(AttentionState { alignment, context, attended })
}

/// Attention for every row of `queries` (`T x H`) at once. Returns the
/// attended states (`T x H`) and the alignment matrix (`T x N`).
pub fn attend(g: &mut Graph, queries: Var, encoder: Var, w_c: Var) -> (Var, Var) {
    let scores = g.matmul_bt(queries, encoder);
    let align = g.softmax_rows(scores, None);
    let ctx = g.matmul(align, encoder);
    let cat = g.concat_cols(&[ctx, queries]);
    let proj = g.matmul(cat, w_c);
    (g.tanh(proj), align)
}
