//! Tree genotypes for constructed features.
//!
//! [`ExprTree`] is a fixed-height template laid out as a complete binary
//! heap (children of `i` at `2i+1`, `2i+2`). Every slot holds a primitive;
//! slots not reachable through expressed child links are introns. Homologous
//! mixing relies on the positions staying put.
//!
//! [`DynTree`] is an ordinary recursive tree used by standard GP, whose
//! shape is unbounded up to a height cap.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Height cap for unbounded GP.
pub const MAX_DYN_HEIGHT: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Primitive {
    Add,
    Mul,
    Sub,
    /// Analytic quotient `a / sqrt(1 + b^2)`.
    AqDiv,
    Square,
    /// `sqrt(|a|)`.
    SqrtP,
    /// `ln|a|`, with `0` at `a = 0`.
    LogP,
    Exp,
    /// Original feature column (zero-based).
    Feature(usize),
    Const(f64),
}

pub const FUNCTIONS: [Primitive; 8] = [
    Primitive::Add,
    Primitive::Mul,
    Primitive::Sub,
    Primitive::AqDiv,
    Primitive::Square,
    Primitive::SqrtP,
    Primitive::LogP,
    Primitive::Exp,
];

impl Primitive {
    pub fn arity(self) -> usize {
        match self {
            Primitive::Add | Primitive::Mul | Primitive::Sub | Primitive::AqDiv => 2,
            Primitive::Square | Primitive::SqrtP | Primitive::LogP | Primitive::Exp => 1,
            Primitive::Feature(_) | Primitive::Const(_) => 0,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.arity() == 0
    }

    /// Bit-exact identity (constants compare by their bit pattern).
    pub fn same_as(self, other: Primitive) -> bool {
        match (self, other) {
            (Primitive::Const(a), Primitive::Const(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        }
    }

    /// Symbol code for linkage estimation: every constant maps to one symbol.
    pub fn symbol(self) -> u32 {
        match self {
            Primitive::Add => 0,
            Primitive::Mul => 1,
            Primitive::Sub => 2,
            Primitive::AqDiv => 3,
            Primitive::Square => 4,
            Primitive::SqrtP => 5,
            Primitive::LogP => 6,
            Primitive::Exp => 7,
            Primitive::Const(_) => 8,
            Primitive::Feature(i) => 9 + i as u32,
        }
    }

    fn push_key(self, key: &mut Vec<u64>) {
        key.push(self.symbol() as u64);
        if let Primitive::Const(v) = self {
            key.push(v.to_bits());
        }
    }
}

/// Terminal set: the original features plus an ephemeral random constant
/// drawn uniformly from `erc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalSet {
    pub n_features: usize,
    pub erc: (f64, f64),
}

impl TerminalSet {
    pub fn new(n_features: usize, erc: (f64, f64)) -> Self {
        Self { n_features, erc }
    }

    /// Uniform over the `n_features + 1` terminal symbols; the ERC symbol
    /// draws a fresh constant.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Primitive {
        let i = rng.random_range(0..=self.n_features);
        if i < self.n_features {
            Primitive::Feature(i)
        } else {
            let (lo, hi) = self.erc;
            if hi > lo {
                Primitive::Const(rng.random_range(lo..=hi))
            } else {
                Primitive::Const(lo)
            }
        }
    }

    fn sample_function<R: Rng + ?Sized>(&self, rng: &mut R) -> Primitive {
        FUNCTIONS[rng.random_range(0..FUNCTIONS.len())]
    }

    /// Uniform over functions and terminal symbols together.
    fn sample_any<R: Rng + ?Sized>(&self, rng: &mut R) -> Primitive {
        let n = FUNCTIONS.len() + self.n_features + 1;
        if rng.random_range(0..n) < FUNCTIONS.len() {
            self.sample_function(rng)
        } else {
            self.sample(rng)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMethod {
    Grow,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynTree {
    pub prim: Primitive,
    pub children: Vec<DynTree>,
}

impl DynTree {
    pub fn leaf(prim: Primitive) -> Self {
        assert!(prim.is_terminal(), "{prim:?} is not a terminal");
        Self {
            prim,
            children: Vec::new(),
        }
    }

    pub fn node(prim: Primitive, children: Vec<DynTree>) -> Self {
        assert_eq!(prim.arity(), children.len(), "arity mismatch for {prim:?}");
        Self { prim, children }
    }

    pub fn unary(prim: Primitive, a: DynTree) -> Self {
        Self::node(prim, vec![a])
    }

    pub fn binary(prim: Primitive, a: DynTree, b: DynTree) -> Self {
        Self::node(prim, vec![a, b])
    }

    pub fn feature(i: usize) -> Self {
        Self::leaf(Primitive::Feature(i))
    }

    pub fn constant(v: f64) -> Self {
        Self::leaf(Primitive::Const(v))
    }

    /// Edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        self.children.iter().map(|c| c.height() + 1).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(DynTree::size).sum::<usize>()
    }

    pub fn preorder(&self) -> Vec<Primitive> {
        let mut out = Vec::with_capacity(self.size());
        self.walk(&mut |t| out.push(t.prim));
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a DynTree)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// Syntactic identity key: preorder symbols with exact constant bits.
    pub fn key(&self) -> Vec<u64> {
        let mut key = Vec::new();
        self.walk(&mut |t| t.prim.push_key(&mut key));
        key
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.preorder()
            .into_iter()
            .filter_map(|p| match p {
                Primitive::Feature(i) => Some(i),
                _ => None,
            })
            .max()
    }

    /// Paths (child indices from the root) of every node, grouped by depth.
    pub fn paths_by_depth(&self) -> Vec<Vec<Vec<usize>>> {
        let mut levels: Vec<Vec<Vec<usize>>> = Vec::new();
        let mut stack = vec![(self, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            let d = path.len();
            if levels.len() <= d {
                levels.resize(d + 1, Vec::new());
            }
            for (i, c) in node.children.iter().enumerate().rev() {
                let mut p = path.clone();
                p.push(i);
                stack.push((c, p));
            }
            levels[d].push(path);
        }
        levels
    }

    pub fn subtree(&self, path: &[usize]) -> &DynTree {
        path.iter().fold(self, |t, &i| &t.children[i])
    }

    pub fn replace(&mut self, path: &[usize], new: DynTree) {
        let slot = path.iter().fold(self, |t, &i| &mut t.children[i]);
        *slot = new;
    }
}

/// Samples a tree with GROW or FULL.
///
/// FULL puts functions at every depth below `max_height` and terminals at
/// `max_height`. GROW chooses uniformly among functions and terminals, except
/// that one root-to-leaf path is forced to reach `min_height`.
pub fn sample_tree<R: Rng + ?Sized>(
    method: InitMethod,
    min_height: usize,
    max_height: usize,
    terminals: &TerminalSet,
    rng: &mut R,
) -> DynTree {
    assert!(min_height <= max_height, "min_height > max_height");
    sample_rec(method, 0, min_height, max_height, true, terminals, rng)
}

fn sample_rec<R: Rng + ?Sized>(
    method: InitMethod,
    depth: usize,
    min_height: usize,
    max_height: usize,
    deep_path: bool,
    terminals: &TerminalSet,
    rng: &mut R,
) -> DynTree {
    let prim = if depth >= max_height {
        terminals.sample(rng)
    } else if method == InitMethod::Full || (deep_path && depth < min_height) {
        terminals.sample_function(rng)
    } else {
        terminals.sample_any(rng)
    };
    let arity = prim.arity();
    let deep_child = if arity > 0 { rng.random_range(0..arity) } else { 0 };
    let children = (0..arity)
        .map(|i| {
            sample_rec(
                method,
                depth + 1,
                min_height,
                max_height,
                deep_path && i == deep_child,
                terminals,
                rng,
            )
        })
        .collect();
    DynTree { prim, children }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Half GROW, half FULL, all at one height.
    HalfAndHalf(usize),
    /// Heights ramped over `[lo, hi]`, half GROW and half FULL per height.
    Ramped(usize, usize),
}

/// Samples `size` trees, retrying each up to `uniqueness_tries` times when
/// its expressed node sequence duplicates an earlier tree; after that the
/// duplicate is accepted.
pub fn init_population<R: Rng + ?Sized>(
    size: usize,
    scheme: InitScheme,
    grow_min_height: usize,
    uniqueness_tries: usize,
    terminals: &TerminalSet,
    rng: &mut R,
) -> Vec<DynTree> {
    let (lo, hi) = match scheme {
        InitScheme::HalfAndHalf(h) => (h, h),
        InitScheme::Ramped(lo, hi) => (lo.min(hi), hi),
    };
    let levels = hi - lo + 1;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(size);
    for i in 0..size {
        let height = lo + i % levels;
        let method = if (i / levels) % 2 == 0 {
            InitMethod::Grow
        } else {
            InitMethod::Full
        };
        let min_h = grow_min_height.min(height);
        let mut tree = sample_tree(method, min_h, height, terminals, rng);
        for _ in 0..uniqueness_tries {
            if !seen.contains(&tree.key()) {
                break;
            }
            tree = sample_tree(method, min_h, height, terminals, rng);
        }
        seen.insert(tree.key());
        out.push(tree);
    }
    out
}

/// Number of slots in a template of height `h`.
pub fn template_len(h: usize) -> usize {
    (1 << (h + 1)) - 1
}

/// Depth of heap position `pos`.
pub fn depth_of(pos: usize) -> usize {
    (usize::BITS - 1 - (pos + 1).leading_zeros()) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    nodes: Vec<Primitive>,
    max_height: usize,
}

impl ExprTree {
    /// Wraps a full slot array. Slots at the bottom level must be terminals.
    pub fn from_nodes(nodes: Vec<Primitive>, max_height: usize) -> Self {
        assert_eq!(nodes.len(), template_len(max_height), "template length");
        let first_leaf = template_len(max_height) - (1 << max_height);
        assert!(
            nodes[first_leaf..].iter().all(|p| p.is_terminal()),
            "bottom level must hold terminals"
        );
        Self { nodes, max_height }
    }

    /// Embeds `tree` at the top of a height-`max_height` template and fills
    /// every remaining slot at random (terminals on the bottom level).
    pub fn from_dyn<R: Rng + ?Sized>(
        tree: &DynTree,
        max_height: usize,
        terminals: &TerminalSet,
        rng: &mut R,
    ) -> Self {
        assert!(tree.height() <= max_height, "tree taller than template");
        let len = template_len(max_height);
        let mut slots: Vec<Option<Primitive>> = vec![None; len];
        fn place(t: &DynTree, pos: usize, slots: &mut [Option<Primitive>]) {
            slots[pos] = Some(t.prim);
            for (i, c) in t.children.iter().enumerate() {
                place(c, 2 * pos + 1 + i, slots);
            }
        }
        place(tree, 0, &mut slots);
        let nodes = slots
            .into_iter()
            .enumerate()
            .map(|(pos, s)| {
                s.unwrap_or_else(|| {
                    if depth_of(pos) == max_height {
                        terminals.sample(rng)
                    } else {
                        terminals.sample_any(rng)
                    }
                })
            })
            .collect();
        Self { nodes, max_height }
    }

    pub fn sample<R: Rng + ?Sized>(
        method: InitMethod,
        max_height: usize,
        min_height: usize,
        terminals: &TerminalSet,
        rng: &mut R,
    ) -> Self {
        let t = sample_tree(method, min_height.min(max_height), max_height, terminals, rng);
        Self::from_dyn(&t, max_height, terminals, rng)
    }

    pub fn nodes(&self) -> &[Primitive] {
        &self.nodes
    }

    pub fn max_height(&self) -> usize {
        self.max_height
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, pos: usize) -> Primitive {
        self.nodes[pos]
    }

    /// Overwrites one slot. A function on the bottom level is rejected.
    pub fn set(&mut self, pos: usize, prim: Primitive) {
        assert!(
            prim.is_terminal() || depth_of(pos) < self.max_height,
            "function at bottom level"
        );
        self.nodes[pos] = prim;
    }

    /// Preorder walk from the root following exactly arity-many children.
    pub fn expressed_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(pos) = stack.pop() {
            out.push(pos);
            let arity = self.nodes[pos].arity();
            for i in (0..arity).rev() {
                stack.push(2 * pos + 1 + i);
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.expressed_positions()
            .into_iter()
            .map(depth_of)
            .max()
            .unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        self.expressed_positions().len()
    }

    /// The expressed part as a free-shape tree.
    pub fn to_dyn(&self) -> DynTree {
        fn build(nodes: &[Primitive], pos: usize) -> DynTree {
            let prim = nodes[pos];
            DynTree {
                prim,
                children: (0..prim.arity()).map(|i| build(nodes, 2 * pos + 1 + i)).collect(),
            }
        }
        build(&self.nodes, 0)
    }
}

/// Parenthesized infix text with columns named `x1..xp`.
///
/// With `expand_protected`, the analytic quotient prints as
/// `a / sqrt(1 + b^2)` and the protected log as `log(|a|)`.
pub fn to_infix(tree: &DynTree, expand_protected: bool) -> String {
    let mut s = String::new();
    write_infix(tree, expand_protected, &mut s);
    s
}

/// Binary operator nodes (and their expansions) need parentheses as operands.
fn is_compound(tree: &DynTree) -> bool {
    match tree.prim {
        Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::AqDiv | Primitive::Square => true,
        Primitive::Const(v) => v.is_sign_negative(),
        Primitive::LogP | Primitive::SqrtP | Primitive::Exp | Primitive::Feature(_) => false,
    }
}

fn operand(tree: &DynTree, expand: bool, out: &mut String) {
    if is_compound(tree) {
        out.push('(');
        write_infix(tree, expand, out);
        out.push(')');
    } else {
        write_infix(tree, expand, out);
    }
}

fn write_infix(tree: &DynTree, expand: bool, out: &mut String) {
    let c = &tree.children;
    match tree.prim {
        Primitive::Feature(i) => out.push_str(&format!("x{}", i + 1)),
        Primitive::Const(v) => out.push_str(&format_const(v)),
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            let op = match tree.prim {
                Primitive::Add => " + ",
                Primitive::Sub => " - ",
                _ => " * ",
            };
            operand(&c[0], expand, out);
            out.push_str(op);
            operand(&c[1], expand, out);
        }
        Primitive::AqDiv => {
            operand(&c[0], expand, out);
            if expand {
                out.push_str(" / sqrt(1 + ");
                operand(&c[1], expand, out);
                out.push_str("^2)");
            } else {
                out.push_str(" div ");
                operand(&c[1], expand, out);
            }
        }
        Primitive::Square => {
            operand(&c[0], expand, out);
            out.push_str("^2");
        }
        Primitive::SqrtP => {
            out.push_str("sqrt(");
            write_infix(&c[0], expand, out);
            out.push(')');
        }
        Primitive::LogP => {
            if expand {
                out.push_str("log(|");
                write_infix(&c[0], expand, out);
                out.push_str("|)");
            } else {
                out.push_str("plog(");
                write_infix(&c[0], expand, out);
                out.push(')');
            }
        }
        Primitive::Exp => {
            out.push_str("exp(");
            write_infix(&c[0], expand, out);
            out.push(')');
        }
    }
}

/// Six significant digits, trailing zeros dropped (like C's `%g`).
pub fn format_const(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
