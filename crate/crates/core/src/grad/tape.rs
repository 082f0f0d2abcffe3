//! Wengert-list reverse-mode differentiation over flat f64 buffers.
//!
//! The tape records one entry per primitive applied to whole vectors or
//! matrices (dense maps, elementwise nonlinearities, gathers, one record per
//! recurrence step), so its length is O(T) per layer rather than per scalar.
//! Saved forward values live either in the value buffers themselves or in a
//! per-record aux vector (RMS scales, softmax probabilities).

use crate::error::Error;
use crate::params::sigmoid;
use crate::Result;

pub type ValId = usize;

#[derive(Clone, Debug)]
pub struct Buffer {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Buffer {
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Clone, Debug)]
enum OpKind {
    Leaf { needs_grad: bool },
    Add { a: ValId, b: ValId },
    Mul { a: ValId, b: ValId },
    OneMinus { a: ValId },
    Scale { a: ValId, k: f64 },
    MulScalar { a: ValId, s: ValId },
    Exp { a: ValId },
    Sqrt { a: ValId },
    Sigmoid { a: ValId },
    Softplus { a: ValId },
    /// (R×I)·(I×O) -> R×O, weights in input-major layout.
    Linear { x: ValId, w: ValId },
    /// m[r,c] + v[c]
    RowAdd { m: ValId, v: ValId },
    /// Row lookup into a table, the embedding primitive.
    Gather { table: ValId, ids: Vec<usize> },
    /// Per-row root-mean-square scaling times a gain vector.
    RmsNorm { x: ValId, gain: ValId },
    /// Depthwise causal convolution, weights D×K.
    CausalConv { x: ValId, w: ValId },
    /// (1×C) -> (rows×C)
    RepeatRows { a: ValId },
    /// (T×N) -> (T×D·N): out[t, d·N+n] = a[t, n]
    TileChannels { a: ValId, copies: usize },
    /// (T×D) -> (T×D·N): out[t, d·N+n] = a[t, d]
    TileStates { a: ValId, copies: usize },
    /// (1×1) -> (rows×cols)
    Broadcast { a: ValId },
    /// (T×D)⊗(T×N) -> T×(D·N): out[t, d·N+n] = u[t,d]·v[t,n]
    OuterTD { u: ValId, v: ValId },
    /// exp(delta[t,d]·adiag[d,n]) -> T×(D·N)
    ExpDtA { delta: ValId, adiag: ValId },
    /// Grouped row dot: (T×D·N)·(T×D·N) -> T×D, summing over each group of N.
    GroupedDot { a: ValId, b: ValId, group: usize },
    /// One recurrence step: h_t = a[t,:] ⊙ h_prev + drive[t,:]; h_prev is the
    /// previous step's output (None at t = 0, where h_0 = 0).
    ScanStep {
        a: ValId,
        drive: ValId,
        h_prev: Option<ValId>,
        t: usize,
    },
    /// Reassemble T row values into a T×K matrix.
    Stack { rows: Vec<ValId> },
    /// Mean negative log-likelihood over masked positions -> 1×1.
    MaskedCrossEntropy {
        logits: ValId,
        targets: Vec<u32>,
        mask: Vec<bool>,
    },
}

struct Record {
    kind: OpKind,
    /// Saved forward values the adjoint needs beyond the operand buffers.
    aux: Vec<f64>,
}

/// Recorded forward computation. Record i produced value i; operands always
/// precede their consumers, which is what makes the single reverse sweep in
/// `backward` valid.
pub struct Tape {
    vals: Vec<Buffer>,
    recs: Vec<Record>,
    poisoned: Option<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            vals: Vec::new(),
            recs: Vec::new(),
            poisoned: None,
        }
    }

    /// Number of recorded operations (leaves included).
    pub fn len(&self) -> usize {
        self.recs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.recs.is_empty()
    }

    /// First operation that produced a non-finite value, if any.
    pub fn poisoned(&self) -> Option<usize> {
        self.poisoned
    }

    pub fn value(&self, id: ValId) -> &Buffer {
        &self.vals[id]
    }

    fn push(&mut self, kind: OpKind, aux: Vec<f64>, buf: Buffer) -> ValId {
        let id = self.vals.len();
        if self.poisoned.is_none() && buf.data.iter().any(|v| !v.is_finite()) {
            self.poisoned = Some(id);
        }
        self.vals.push(buf);
        self.recs.push(Record { kind, aux });
        id
    }

    pub fn leaf(&mut self, data: Vec<f64>, rows: usize, cols: usize, needs_grad: bool) -> ValId {
        assert_eq!(data.len(), rows * cols, "leaf shape mismatch");
        self.push(
            OpKind::Leaf { needs_grad },
            Vec::new(),
            Buffer { data, rows, cols },
        )
    }

    pub fn add(&mut self, a: ValId, b: ValId) -> ValId {
        let (va, vb) = (&self.vals[a], &self.vals[b]);
        assert_eq!(va.len(), vb.len());
        let buf = Buffer {
            data: va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::Add { a, b }, Vec::new(), buf)
    }

    pub fn mul(&mut self, a: ValId, b: ValId) -> ValId {
        let (va, vb) = (&self.vals[a], &self.vals[b]);
        assert_eq!(va.len(), vb.len());
        let buf = Buffer {
            data: va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::Mul { a, b }, Vec::new(), buf)
    }

    pub fn one_minus(&mut self, a: ValId) -> ValId {
        let va = &self.vals[a];
        let buf = Buffer {
            data: va.data.iter().map(|x| 1.0 - x).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::OneMinus { a }, Vec::new(), buf)
    }

    pub fn scale(&mut self, a: ValId, k: f64) -> ValId {
        let va = &self.vals[a];
        let buf = Buffer {
            data: va.data.iter().map(|x| x * k).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::Scale { a, k }, Vec::new(), buf)
    }

    pub fn mul_scalar(&mut self, a: ValId, s: ValId) -> ValId {
        assert_eq!(self.vals[s].len(), 1, "mul_scalar expects a 1×1 operand");
        let sv = self.vals[s].data[0];
        let va = &self.vals[a];
        let buf = Buffer {
            data: va.data.iter().map(|x| x * sv).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::MulScalar { a, s }, Vec::new(), buf)
    }

    pub fn exp(&mut self, a: ValId) -> ValId {
        let va = &self.vals[a];
        let buf = Buffer {
            data: va.data.iter().map(|x| x.exp()).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::Exp { a }, Vec::new(), buf)
    }

    pub fn sqrt(&mut self, a: ValId) -> ValId {
        let va = &self.vals[a];
        let buf = Buffer {
            data: va.data.iter().map(|x| x.sqrt()).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::Sqrt { a }, Vec::new(), buf)
    }

    pub fn sigmoid(&mut self, a: ValId) -> ValId {
        let va = &self.vals[a];
        let buf = Buffer {
            data: va.data.iter().map(|&x| sigmoid(x)).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::Sigmoid { a }, Vec::new(), buf)
    }

    pub fn softplus(&mut self, a: ValId) -> ValId {
        let va = &self.vals[a];
        let buf = Buffer {
            data: va.data.iter().map(|&x| crate::params::softplus(x)).collect(),
            rows: va.rows,
            cols: va.cols,
        };
        self.push(OpKind::Softplus { a }, Vec::new(), buf)
    }

    pub fn linear(&mut self, x: ValId, w: ValId) -> ValId {
        let (vx, vw) = (&self.vals[x], &self.vals[w]);
        let (r, i, o) = (vx.rows, vx.cols, vw.cols);
        assert_eq!(vw.rows, i, "linear: weight rows must match input cols");
        let mut data = vec![0.0; r * o];
        for rr in 0..r {
            let xrow = vx.row(rr);
            let orow = &mut data[rr * o..(rr + 1) * o];
            for (ii, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wrow = vw.row(ii);
                for (oo, &wv) in wrow.iter().enumerate() {
                    orow[oo] += xv * wv;
                }
            }
        }
        self.push(
            OpKind::Linear { x, w },
            Vec::new(),
            Buffer { data, rows: r, cols: o },
        )
    }

    pub fn row_add(&mut self, m: ValId, v: ValId) -> ValId {
        let (vm, vv) = (&self.vals[m], &self.vals[v]);
        assert_eq!(vm.cols, vv.len());
        let mut data = vm.data.clone();
        for r in 0..vm.rows {
            for c in 0..vm.cols {
                data[r * vm.cols + c] += vv.data[c];
            }
        }
        self.push(
            OpKind::RowAdd { m, v },
            Vec::new(),
            Buffer { data, rows: vm.rows, cols: vm.cols },
        )
    }

    pub fn gather(&mut self, table: ValId, ids: &[usize]) -> ValId {
        let vt = &self.vals[table];
        let cols = vt.cols;
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            assert!(id < vt.rows, "gather index {id} out of range");
            data.extend_from_slice(vt.row(id));
        }
        self.push(
            OpKind::Gather { table, ids: ids.to_vec() },
            Vec::new(),
            Buffer { data, rows: ids.len(), cols },
        )
    }

    pub fn rms_norm(&mut self, x: ValId, gain: ValId) -> ValId {
        const EPS: f64 = 1e-8;
        let (vx, vg) = (&self.vals[x], &self.vals[gain]);
        assert_eq!(vx.cols, vg.len());
        let mut data = vec![0.0; vx.len()];
        let mut inv = vec![0.0; vx.rows];
        for r in 0..vx.rows {
            let row = vx.row(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / vx.cols as f64;
            let s = 1.0 / (ms + EPS).sqrt();
            inv[r] = s;
            for c in 0..vx.cols {
                data[r * vx.cols + c] = row[c] * s * vg.data[c];
            }
        }
        self.push(
            OpKind::RmsNorm { x, gain },
            inv,
            Buffer { data, rows: vx.rows, cols: vx.cols },
        )
    }

    pub fn causal_conv(&mut self, x: ValId, w: ValId) -> ValId {
        let (vx, vw) = (&self.vals[x], &self.vals[w]);
        let (t_len, d) = (vx.rows, vx.cols);
        assert_eq!(vw.rows, d, "conv weights are D×K");
        let k_len = vw.cols;
        let mut data = vec![0.0; t_len * d];
        for t in 0..t_len {
            for dd in 0..d {
                let mut acc = 0.0;
                for k in 0..k_len.min(t + 1) {
                    acc += vw.data[dd * k_len + k] * vx.data[(t - k) * d + dd];
                }
                data[t * d + dd] = acc;
            }
        }
        self.push(
            OpKind::CausalConv { x, w },
            Vec::new(),
            Buffer { data, rows: t_len, cols: d },
        )
    }

    pub fn repeat_rows(&mut self, a: ValId, rows: usize) -> ValId {
        let va = &self.vals[a];
        assert_eq!(va.rows, 1);
        let mut data = Vec::with_capacity(rows * va.cols);
        for _ in 0..rows {
            data.extend_from_slice(&va.data);
        }
        self.push(
            OpKind::RepeatRows { a },
            Vec::new(),
            Buffer { data, rows, cols: va.cols },
        )
    }

    pub fn tile_channels(&mut self, a: ValId, copies: usize) -> ValId {
        let va = &self.vals[a];
        let (t_len, n) = (va.rows, va.cols);
        let mut data = Vec::with_capacity(t_len * copies * n);
        for t in 0..t_len {
            let row = va.row(t);
            for _ in 0..copies {
                data.extend_from_slice(row);
            }
        }
        self.push(
            OpKind::TileChannels { a, copies },
            Vec::new(),
            Buffer { data, rows: t_len, cols: copies * n },
        )
    }

    pub fn tile_states(&mut self, a: ValId, copies: usize) -> ValId {
        let va = &self.vals[a];
        let (t_len, d) = (va.rows, va.cols);
        let mut data = Vec::with_capacity(t_len * d * copies);
        for t in 0..t_len {
            for dd in 0..d {
                let v = va.data[t * d + dd];
                for _ in 0..copies {
                    data.push(v);
                }
            }
        }
        self.push(
            OpKind::TileStates { a, copies },
            Vec::new(),
            Buffer { data, rows: t_len, cols: d * copies },
        )
    }

    pub fn broadcast(&mut self, a: ValId, rows: usize, cols: usize) -> ValId {
        let va = &self.vals[a];
        assert_eq!(va.len(), 1);
        let v = va.data[0];
        self.push(
            OpKind::Broadcast { a },
            Vec::new(),
            Buffer { data: vec![v; rows * cols], rows, cols },
        )
    }

    pub fn outer_td(&mut self, u: ValId, v: ValId) -> ValId {
        let (vu, vv) = (&self.vals[u], &self.vals[v]);
        assert_eq!(vu.rows, vv.rows);
        let (t_len, d, n) = (vu.rows, vu.cols, vv.cols);
        let mut data = Vec::with_capacity(t_len * d * n);
        for t in 0..t_len {
            let urow = vu.row(t);
            let vrow = vv.row(t);
            for &uv in urow {
                for &vvv in vrow {
                    data.push(uv * vvv);
                }
            }
        }
        self.push(
            OpKind::OuterTD { u, v },
            Vec::new(),
            Buffer { data, rows: t_len, cols: d * n },
        )
    }

    pub fn exp_dt_a(&mut self, delta: ValId, adiag: ValId) -> ValId {
        let (vd, va) = (&self.vals[delta], &self.vals[adiag]);
        let (t_len, d, n) = (vd.rows, vd.cols, va.cols);
        assert_eq!(va.rows, d, "adiag is D×N");
        let mut data = Vec::with_capacity(t_len * d * n);
        for t in 0..t_len {
            for dd in 0..d {
                let dt = vd.data[t * d + dd];
                let arow = va.row(dd);
                for &av in arow {
                    data.push((dt * av).exp());
                }
            }
        }
        self.push(
            OpKind::ExpDtA { delta, adiag },
            Vec::new(),
            Buffer { data, rows: t_len, cols: d * n },
        )
    }

    pub fn grouped_dot(&mut self, a: ValId, b: ValId, group: usize) -> ValId {
        let (va, vb) = (&self.vals[a], &self.vals[b]);
        assert_eq!(va.len(), vb.len());
        assert_eq!(va.cols % group, 0);
        let (t_len, d) = (va.rows, va.cols / group);
        let mut data = vec![0.0; t_len * d];
        for t in 0..t_len {
            let arow = va.row(t);
            let brow = vb.row(t);
            for dd in 0..d {
                let mut acc = 0.0;
                for n in 0..group {
                    acc += arow[dd * group + n] * brow[dd * group + n];
                }
                data[t * d + dd] = acc;
            }
        }
        self.push(
            OpKind::GroupedDot { a, b, group },
            Vec::new(),
            Buffer { data, rows: t_len, cols: d },
        )
    }

    /// Record the full recurrence as T step records plus a stack, returning
    /// (stacked h: T×K, per-step row ids).
    pub fn scan(&mut self, a: ValId, drive: ValId) -> (ValId, Vec<ValId>) {
        let (va, vd) = (&self.vals[a], &self.vals[drive]);
        assert_eq!(va.rows, vd.rows);
        assert_eq!(va.cols, vd.cols);
        let (t_len, k) = (va.rows, va.cols);
        let mut rows = Vec::with_capacity(t_len);
        let mut h_prev: Option<ValId> = None;
        for t in 0..t_len {
            let mut data = self.vals[drive].row(t).to_vec();
            if let Some(hp) = h_prev {
                let arow = self.vals[a].row(t);
                let prev = &self.vals[hp].data;
                for j in 0..k {
                    data[j] += arow[j] * prev[j];
                }
            }
            let id = self.push(
                OpKind::ScanStep { a, drive, h_prev, t },
                Vec::new(),
                Buffer { data, rows: 1, cols: k },
            );
            rows.push(id);
            h_prev = Some(id);
        }
        let stacked = self.stack(&rows);
        (stacked, rows)
    }

    pub fn stack(&mut self, rows: &[ValId]) -> ValId {
        assert!(!rows.is_empty());
        let cols = self.vals[rows[0]].cols;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            assert_eq!(self.vals[r].rows, 1);
            assert_eq!(self.vals[r].cols, cols);
            data.extend_from_slice(&self.vals[r].data);
        }
        self.push(
            OpKind::Stack { rows: rows.to_vec() },
            Vec::new(),
            Buffer { data, rows: rows.len(), cols },
        )
    }

    /// Mean NLL over masked positions. Fails if the mask selects nothing.
    pub fn masked_cross_entropy(
        &mut self,
        logits: ValId,
        targets: &[u32],
        mask: &[bool],
    ) -> Result<ValId> {
        let vl = &self.vals[logits];
        let (t_len, vocab) = (vl.rows, vl.cols);
        if targets.len() != t_len || mask.len() != t_len {
            return Err(Error::ShapeMismatch(format!(
                "targets/mask length {} / {} vs {} logit rows",
                targets.len(),
                mask.len(),
                t_len
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        // Softmax probabilities for every row are saved for the adjoint.
        let mut probs = vec![0.0; t_len * vocab];
        let mut loss = 0.0;
        for t in 0..t_len {
            let row = vl.row(t);
            let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..vocab {
                let e = (row[c] - maxv).exp();
                probs[t * vocab + c] = e;
                z += e;
            }
            for c in 0..vocab {
                probs[t * vocab + c] /= z;
            }
            if mask[t] {
                let p = probs[t * vocab + targets[t] as usize];
                loss -= p.ln();
            }
        }
        loss /= count as f64;
        Ok(self.push(
            OpKind::MaskedCrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
            probs,
            Buffer { data: vec![loss], rows: 1, cols: 1 },
        ))
    }

    /// Reverse sweep from `seed` with the given cotangent. Returns adjoints
    /// for every value (None where no gradient flowed).
    pub fn backward(&self, seed: ValId, cotangent: &[f64]) -> Result<Adjoints> {
        let want = self.vals[seed].len();
        if cotangent.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "cotangent has {} entries, output has {}",
                cotangent.len(),
                want
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.vals.len()];
        adj[seed] = Some(cotangent.to_vec());

        for i in (0..=seed).rev() {
            if adj[i].is_none() {
                continue;
            }
            let (head, tail) = adj.split_at_mut(i);
            let g = tail[0].as_mut().expect("checked above");
            self.accumulate(i, g, head);
        }
        Ok(Adjoints { bufs: adj })
    }

    #[allow(clippy::needless_range_loop)]
    fn accumulate(&self, i: ValId, g: &mut [f64], head: &mut [Option<Vec<f64>>]) {
        let vals = &self.vals;
        let slot = |head: &mut [Option<Vec<f64>>], id: ValId, len: usize| -> *mut f64 {
            let entry = head[id].get_or_insert_with(|| vec![0.0; len]);
            entry.as_mut_ptr()
        };
        // Convenience accessor: get_or_insert and return &mut Vec.
        macro_rules! acc {
            ($id:expr) => {{
                let len = vals[$id].len();
                head[$id].get_or_insert_with(|| vec![0.0; len])
            }};
        }
        let _ = slot;
        match &self.recs[i].kind {
            OpKind::Leaf { .. } => {}
            OpKind::Add { a, b } => {
                {
                    let ga = acc!(*a);
                    for k in 0..g.len() {
                        ga[k] += g[k];
                    }
                }
                let gb = acc!(*b);
                for k in 0..g.len() {
                    gb[k] += g[k];
                }
            }
            OpKind::Mul { a, b } => {
                {
                    let ga = acc!(*a);
                    for k in 0..g.len() {
                        ga[k] += g[k] * vals[*b].data[k];
                    }
                }
                let gb = acc!(*b);
                for k in 0..g.len() {
                    gb[k] += g[k] * vals[*a].data[k];
                }
            }
            OpKind::OneMinus { a } => {
                let ga = acc!(*a);
                for k in 0..g.len() {
                    ga[k] -= g[k];
                }
            }
            OpKind::Scale { a, k } => {
                let ga = acc!(*a);
                for j in 0..g.len() {
                    ga[j] += g[j] * k;
                }
            }
            OpKind::MulScalar { a, s } => {
                let sv = vals[*s].data[0];
                {
                    let ga = acc!(*a);
                    for k in 0..g.len() {
                        ga[k] += g[k] * sv;
                    }
                }
                let gs = acc!(*s);
                let mut acc = 0.0;
                for k in 0..g.len() {
                    acc += g[k] * vals[*a].data[k];
                }
                gs[0] += acc;
            }
            OpKind::Exp { a } => {
                let out = &vals[i].data;
                let ga = acc!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] * out[k];
                }
            }
            OpKind::Sqrt { a } => {
                let out = &vals[i].data;
                let ga = acc!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] * 0.5 / out[k];
                }
            }
            OpKind::Sigmoid { a } => {
                let out = &vals[i].data;
                let ga = acc!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] * out[k] * (1.0 - out[k]);
                }
            }
            OpKind::Softplus { a } => {
                let xin = &vals[*a].data;
                let ga = acc!(*a);
                for k in 0..g.len() {
                    ga[k] += g[k] * sigmoid(xin[k]);
                }
            }
            OpKind::Linear { x, w } => {
                let (vx, vw) = (&vals[*x], &vals[*w]);
                let (r, icols, o) = (vx.rows, vx.cols, vw.cols);
                {
                    let gx = acc!(*x);
                    for rr in 0..r {
                        for ii in 0..icols {
                            let wrow = vw.row(ii);
                            let grow = &g[rr * o..(rr + 1) * o];
                            let mut acc = 0.0;
                            for oo in 0..o {
                                acc += grow[oo] * wrow[oo];
                            }
                            gx[rr * icols + ii] += acc;
                        }
                    }
                }
                let gw = acc!(*w);
                for rr in 0..r {
                    let xrow = vx.row(rr);
                    let grow = &g[rr * o..(rr + 1) * o];
                    for ii in 0..icols {
                        let xv = xrow[ii];
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &mut gw[ii * o..(ii + 1) * o];
                        for oo in 0..o {
                            wrow[oo] += xv * grow[oo];
                        }
                    }
                }
            }
            OpKind::RowAdd { m, v } => {
                let cols = vals[*m].cols;
                let rows = vals[*m].rows;
                {
                    let gm = acc!(*m);
                    for k in 0..g.len() {
                        gm[k] += g[k];
                    }
                }
                let gv = acc!(*v);
                for r in 0..rows {
                    for c in 0..cols {
                        gv[c] += g[r * cols + c];
                    }
                }
            }
            OpKind::Gather { table, ids } => {
                let cols = vals[*table].cols;
                let gt = acc!(*table);
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..cols {
                        gt[id * cols + c] += g[r * cols + c];
                    }
                }
            }
            OpKind::RmsNorm { x, gain } => {
                let (vx, vg) = (&vals[*x], &vals[*gain]);
                let (rows, cols) = (vx.rows, vx.cols);
                let inv = &self.recs[i].aux;
                {
                    let ggain = acc!(*gain);
                    for r in 0..rows {
                        for c in 0..cols {
                            ggain[c] += g[r * cols + c] * vx.data[r * cols + c] * inv[r];
                        }
                    }
                }
                let gx = acc!(*x);
                for r in 0..rows {
                    let xrow = vx.row(r);
                    let s = inv[r];
                    let mut dot = 0.0;
                    for c in 0..cols {
                        dot += g[r * cols + c] * vg.data[c] * xrow[c];
                    }
                    let corr = s * s * s * dot / cols as f64;
                    for c in 0..cols {
                        gx[r * cols + c] += s * g[r * cols + c] * vg.data[c] - corr * xrow[c];
                    }
                }
            }
            OpKind::CausalConv { x, w } => {
                let (vx, vw) = (&vals[*x], &vals[*w]);
                let (t_len, d) = (vx.rows, vx.cols);
                let k_len = vw.cols;
                {
                    let gx = acc!(*x);
                    for t in 0..t_len {
                        for dd in 0..d {
                            let gv = g[t * d + dd];
                            if gv == 0.0 {
                                continue;
                            }
                            for k in 0..k_len.min(t + 1) {
                                gx[(t - k) * d + dd] += gv * vw.data[dd * k_len + k];
                            }
                        }
                    }
                }
                let gw = acc!(*w);
                for t in 0..t_len {
                    for dd in 0..d {
                        let gv = g[t * d + dd];
                        if gv == 0.0 {
                            continue;
                        }
                        for k in 0..k_len.min(t + 1) {
                            gw[dd * k_len + k] += gv * vx.data[(t - k) * d + dd];
                        }
                    }
                }
            }
            OpKind::RepeatRows { a } => {
                let cols = vals[*a].cols;
                let rows = vals[i].rows;
                let ga = acc!(*a);
                for r in 0..rows {
                    for c in 0..cols {
                        ga[c] += g[r * cols + c];
                    }
                }
            }
            OpKind::TileChannels { a, copies } => {
                let (t_len, n) = (vals[*a].rows, vals[*a].cols);
                let ga = acc!(*a);
                for t in 0..t_len {
                    for d in 0..*copies {
                        for j in 0..n {
                            ga[t * n + j] += g[t * copies * n + d * n + j];
                        }
                    }
                }
            }
            OpKind::TileStates { a, copies } => {
                let (t_len, d) = (vals[*a].rows, vals[*a].cols);
                let ga = acc!(*a);
                for t in 0..t_len {
                    for dd in 0..d {
                        let mut acc = 0.0;
                        for j in 0..*copies {
                            acc += g[t * d * copies + dd * copies + j];
                        }
                        ga[t * d + dd] += acc;
                    }
                }
            }
            OpKind::Broadcast { a } => {
                let ga = acc!(*a);
                ga[0] += g.iter().sum::<f64>();
            }
            OpKind::OuterTD { u, v } => {
                let (vu, vv) = (&vals[*u], &vals[*v]);
                let (t_len, d, n) = (vu.rows, vu.cols, vv.cols);
                {
                    let gu = acc!(*u);
                    for t in 0..t_len {
                        let vrow = vv.row(t);
                        for dd in 0..d {
                            let grow = &g[t * d * n + dd * n..t * d * n + (dd + 1) * n];
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += grow[j] * vrow[j];
                            }
                            gu[t * d + dd] += acc;
                        }
                    }
                }
                let gv = acc!(*v);
                for t in 0..t_len {
                    let urow = vu.row(t);
                    for dd in 0..d {
                        let uv = urow[dd];
                        if uv == 0.0 {
                            continue;
                        }
                        let grow = &g[t * d * n + dd * n..t * d * n + (dd + 1) * n];
                        for j in 0..n {
                            gv[t * n + j] += grow[j] * uv;
                        }
                    }
                }
            }
            OpKind::ExpDtA { delta, adiag } => {
                let (vd, va) = (&vals[*delta], &vals[*adiag]);
                let (t_len, d, n) = (vd.rows, vd.cols, va.cols);
                let out = &vals[i].data;
                {
                    let gd = acc!(*delta);
                    for t in 0..t_len {
                        for dd in 0..d {
                            let arow = va.row(dd);
                            let base = t * d * n + dd * n;
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[base + j] * out[base + j] * arow[j];
                            }
                            gd[t * d + dd] += acc;
                        }
                    }
                }
                let ga = acc!(*adiag);
                for t in 0..t_len {
                    for dd in 0..d {
                        let dt = vd.data[t * d + dd];
                        let base = t * d * n + dd * n;
                        for j in 0..n {
                            ga[dd * n + j] += g[base + j] * out[base + j] * dt;
                        }
                    }
                }
            }
            OpKind::GroupedDot { a, b, group } => {
                let group = *group;
                let va = &vals[*a];
                let (t_len, d) = (va.rows, va.cols / group);
                {
                    let ga = acc!(*a);
                    for t in 0..t_len {
                        for dd in 0..d {
                            let gv = g[t * d + dd];
                            if gv == 0.0 {
                                continue;
                            }
                            let base = t * d * group + dd * group;
                            for j in 0..group {
                                ga[base + j] += gv * vals[*b].data[base + j];
                            }
                        }
                    }
                }
                let gb = acc!(*b);
                for t in 0..t_len {
                    for dd in 0..d {
                        let gv = g[t * d + dd];
                        if gv == 0.0 {
                            continue;
                        }
                        let base = t * d * group + dd * group;
                        for j in 0..group {
                            gb[base + j] += gv * va.data[base + j];
                        }
                    }
                }
            }
            OpKind::ScanStep { a, drive, h_prev, t } => {
                let k = g.len();
                {
                    let gd = acc!(*drive);
                    for j in 0..k {
                        gd[*t * k + j] += g[j];
                    }
                }
                if let Some(hp) = h_prev {
                    let arow_base = *t * k;
                    {
                        let ga = acc!(*a);
                        for j in 0..k {
                            ga[arow_base + j] += g[j] * vals[*hp].data[j];
                        }
                    }
                    let ghp = acc!(*hp);
                    for j in 0..k {
                        ghp[j] += g[j] * vals[*a].data[arow_base + j];
                    }
                }
            }
            OpKind::Stack { rows } => {
                let cols = vals[i].cols;
                for (r, &id) in rows.iter().enumerate() {
                    let gr = acc!(id);
                    for c in 0..cols {
                        gr[c] += g[r * cols + c];
                    }
                }
            }
            OpKind::MaskedCrossEntropy { logits, targets, mask } => {
                let vocab = vals[*logits].cols;
                let count = mask.iter().filter(|&&m| m).count() as f64;
                let probs = &self.recs[i].aux;
                let scale = g[0] / count;
                let gl = acc!(*logits);
                for (t, &m) in mask.iter().enumerate() {
                    if !m {
                        continue;
                    }
                    let tgt = targets[t] as usize;
                    for c in 0..vocab {
                        let indicator = if c == tgt { 1.0 } else { 0.0 };
                        gl[t * vocab + c] += scale * (probs[t * vocab + c] - indicator);
                    }
                }
            }
        }
    }

    /// Recompute every value from the recorded operations and compare with
    /// the stored buffers. Exact replay is the tape's core invariant.
    pub fn replay_matches(&self) -> bool {
        let mut fresh = Tape::new();
        for (i, rec) in self.recs.iter().enumerate() {
            let id = match &rec.kind {
                OpKind::Leaf { needs_grad } => {
                    let b = &self.vals[i];
                    fresh.leaf(b.data.clone(), b.rows, b.cols, *needs_grad)
                }
                OpKind::Add { a, b } => fresh.add(*a, *b),
                OpKind::Mul { a, b } => fresh.mul(*a, *b),
                OpKind::OneMinus { a } => fresh.one_minus(*a),
                OpKind::Scale { a, k } => fresh.scale(*a, *k),
                OpKind::MulScalar { a, s } => fresh.mul_scalar(*a, *s),
                OpKind::Exp { a } => fresh.exp(*a),
                OpKind::Sqrt { a } => fresh.sqrt(*a),
                OpKind::Sigmoid { a } => fresh.sigmoid(*a),
                OpKind::Softplus { a } => fresh.softplus(*a),
                OpKind::Linear { x, w } => fresh.linear(*x, *w),
                OpKind::RowAdd { m, v } => fresh.row_add(*m, *v),
                OpKind::Gather { table, ids } => fresh.gather(*table, ids),
                OpKind::RmsNorm { x, gain } => fresh.rms_norm(*x, *gain),
                OpKind::CausalConv { x, w } => fresh.causal_conv(*x, *w),
                OpKind::RepeatRows { a } => fresh.repeat_rows(*a, self.vals[i].rows),
                OpKind::TileChannels { a, copies } => fresh.tile_channels(*a, *copies),
                OpKind::TileStates { a, copies } => fresh.tile_states(*a, *copies),
                OpKind::Broadcast { a } => {
                    fresh.broadcast(*a, self.vals[i].rows, self.vals[i].cols)
                }
                OpKind::OuterTD { u, v } => fresh.outer_td(*u, *v),
                OpKind::ExpDtA { delta, adiag } => fresh.exp_dt_a(*delta, *adiag),
                OpKind::GroupedDot { a, b, group } => fresh.grouped_dot(*a, *b, *group),
                OpKind::ScanStep { a, drive, h_prev, t } => {
                    // Re-run the single step against already-replayed values.
                    let k = self.vals[i].cols;
                    let mut data = fresh.vals[*drive].row(*t).to_vec();
                    if let Some(hp) = h_prev {
                        let arow = fresh.vals[*a].row(*t).to_vec();
                        let prev = fresh.vals[*hp].data.clone();
                        for j in 0..k {
                            data[j] += arow[j] * prev[j];
                        }
                    }
                    fresh.push(
                        OpKind::ScanStep {
                            a: *a,
                            drive: *drive,
                            h_prev: *h_prev,
                            t: *t,
                        },
                        Vec::new(),
                        Buffer { data, rows: 1, cols: k },
                    )
                }
                OpKind::Stack { rows } => fresh.stack(rows),
                OpKind::MaskedCrossEntropy { logits, targets, mask } => fresh
                    .masked_cross_entropy(*logits, targets, mask)
                    .expect("replay of a recorded op cannot fail"),
            };
            if fresh.vals[id].data != self.vals[i].data {
                return false;
            }
        }
        true
    }
}

/// Adjoint buffers keyed by value id.
pub struct Adjoints {
    bufs: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Gradient for a value; zero-filled when nothing flowed.
    pub fn get(&self, id: ValId, len: usize) -> Vec<f64> {
        match &self.bufs[id] {
            Some(v) => v.clone(),
            None => vec![0.0; len],
        }
    }

    pub fn get_ref(&self, id: ValId) -> Option<&[f64]> {
        self.bufs[id].as_deref()
    }
}
