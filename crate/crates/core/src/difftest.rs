//! Seeded differential testing: the engine against the flat-map oracle.
//!
//! A deterministic generator (ChaCha8, keyed by the seed alone) produces a
//! weighted stream of statements — mostly valid ones built by inspecting
//! the current schema and object graph, salted with deliberately invalid
//! ones. Every statement is applied to both the engine and the
//! [`Oracle`](crate::oracle::Oracle); after each step the outcomes must
//! agree (same result, or errors of the same kind) and the externally
//! observable state must match exactly: extents of every catalog entry,
//! the full attribute view of every live object, object headers, and the
//! next OID. The engine's storage audit must stay clean throughout.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::ast::{
    AttrDecl, BinOp, CtorDecl, Expr, Member, MethodDecl, Param, ProgressArgs, Projection,
    Statement, UnOp,
};
use crate::canon;
use crate::executor::Engine;
use crate::oracle::Oracle;
use crate::value::{Oid, TypeTag, Value};

const ATTR_POOL: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "omega", "tag", "seq", "rate", "flag", "buddy",
];
const METHOD_POOL: &[&str] = &["sumUp", "labelOf", "grade", "probe"];
const STR_POOL: &[&str] = &["", "a", "xy", "Ann", "line\nbreak", "q\"\\t"];

#[derive(Debug, Default, Clone, Copy)]
pub struct DiffStats {
    pub executed: usize,
    pub succeeded: usize,
    pub failed: usize,
}

/// Run `count` generated statements for `seed`; `Err` describes the first
/// divergence.
pub fn run(seed: u64, count: usize) -> Result<DiffStats, String> {
    let mut engine = Engine::in_memory();
    let mut oracle = Oracle::new();
    let mut gen = Generator::new(seed);
    let mut stats = DiffStats::default();

    for step in 1..=count {
        let stmt = gen.statement(&oracle);
        let text = canon::canonicalize(&stmt);
        let fail = |what: String| Err(format!("seed {seed} step {step}: {what}\n  in `{text}`"));

        let engine_out = engine.execute(&stmt);
        let oracle_out = oracle.apply(&stmt);
        stats.executed += 1;
        match (&engine_out, &oracle_out) {
            (Ok(a), Ok(b)) => {
                stats.succeeded += 1;
                if a != b {
                    return fail(format!("results differ\n  engine: {a:?}\n  oracle: {b:?}"));
                }
            }
            (Err(a), Err(b)) => {
                stats.failed += 1;
                if a.kind() != b.kind() {
                    return fail(format!(
                        "error kinds differ\n  engine: {:?} ({a})\n  oracle: {:?} ({b})",
                        a.kind(),
                        b.kind()
                    ));
                }
            }
            (Ok(a), Err(b)) => {
                return fail(format!("engine ok ({a:?}), oracle failed ({b})"));
            }
            (Err(a), Ok(b)) => {
                return fail(format!("oracle ok ({b:?}), engine failed ({a})"));
            }
        }
        if let Err(what) = compare_state(&engine, &oracle) {
            return fail(what);
        }
    }
    Ok(stats)
}

/// Deep equality of everything observable: catalog names, extents, object
/// headers and views, the OID allocator, and the engine's own audit.
pub fn compare_state(engine: &Engine, oracle: &Oracle) -> Result<(), String> {
    let audit = engine.audit();
    if !audit.is_empty() {
        return Err(format!("engine audit failed: {audit:?}"));
    }

    let engine_names: BTreeSet<&str> = engine.catalog().names().collect();
    let oracle_names: BTreeSet<&str> = oracle
        .classes
        .keys()
        .chain(oracle.roles.keys())
        .map(String::as_str)
        .collect();
    if engine_names != oracle_names {
        return Err(format!(
            "catalog names differ: engine {engine_names:?}, oracle {oracle_names:?}"
        ));
    }

    for name in &engine_names {
        let e = engine.extent(name).map_err(|e| e.to_string())?;
        let o = oracle.extent(name).map_err(|e| e.to_string())?;
        if e != o {
            return Err(format!(
                "extent of `{name}` differs: engine {e:?}, oracle {o:?}"
            ));
        }
    }

    let engine_oids: BTreeSet<Oid> = engine.store().objects().keys().copied().collect();
    let oracle_oids: BTreeSet<Oid> = oracle.objects.keys().map(|&o| Oid(o)).collect();
    if engine_oids != oracle_oids {
        return Err(format!(
            "live objects differ: engine {engine_oids:?}, oracle {oracle_oids:?}"
        ));
    }
    for oid in &engine_oids {
        let header = engine.store().header(*oid).map_err(|e| e.to_string())?;
        let obj = oracle.object(*oid).map_err(|e| e.to_string())?;
        if header.mdc != obj.mdc || header.roles != obj.roles {
            return Err(format!(
                "header of {oid} differs: engine ({}, {:?}), oracle ({}, {:?})",
                header.mdc, header.roles, obj.mdc, obj.roles
            ));
        }
        let view = engine.assemble_view(*oid).map_err(|e| e.to_string())?;
        if view != obj.attrs {
            return Err(format!(
                "view of {oid} differs:\n  engine: {view:?}\n  oracle: {:?}",
                obj.attrs
            ));
        }
    }

    if engine.store().next_oid() != oracle.next_oid {
        return Err(format!(
            "next oid differs: engine {}, oracle {}",
            engine.store().next_oid(),
            oracle.next_oid
        ));
    }
    Ok(())
}

/// Statement generator. All state it consults lives in the oracle, so a
/// given seed always produces the same stream as long as engine and oracle
/// agree — which is exactly what the runner verifies.
pub struct Generator {
    rng: ChaCha8Rng,
    fresh: u64,
}

impl Generator {
    pub fn new(seed: u64) -> Generator {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            fresh: 0,
        }
    }

    pub fn statement(&mut self, oracle: &Oracle) -> Statement {
        if oracle.classes.is_empty() {
            return self.gen_create_class(oracle);
        }
        match self.rng.gen_range(0..100u32) {
            0..=8 => self.gen_create_class(oracle),
            9..=14 => self.gen_create_role(oracle),
            15..=17 => self.gen_alter_add_attr(oracle),
            18..=19 => self.gen_alter_add_method(oracle),
            20..=21 => self.gen_alter_replace_method(oracle),
            22..=40 => self.gen_new(oracle),
            41..=57 => self.gen_progress(oracle),
            58..=71 => self.gen_set(oracle),
            72..=79 => self.gen_call(oracle),
            80..=91 => self.gen_select(oracle),
            _ => self.gen_destroy(oracle),
        }
    }

    // ---- small pickers ---------------------------------------------------

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.rng.gen_range(0..items.len())]
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn fresh_name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn any_class(&mut self, oracle: &Oracle) -> Option<String> {
        let names: Vec<&String> = oracle.classes.keys().collect();
        if names.is_empty() {
            None
        } else {
            Some((*self.pick(&names)).clone())
        }
    }

    fn any_entry(&mut self, oracle: &Oracle) -> Option<String> {
        let names: Vec<&String> = oracle.classes.keys().chain(oracle.roles.keys()).collect();
        if names.is_empty() {
            None
        } else {
            Some((*self.pick(&names)).clone())
        }
    }

    fn any_oid(&mut self, oracle: &Oracle) -> Oid {
        if !oracle.objects.is_empty() && !self.chance(0.05) {
            let oids: Vec<&u64> = oracle.objects.keys().collect();
            Oid(**self.pick(&oids))
        } else {
            Oid(self.rng.gen_range(1..40))
        }
    }

    fn gen_tag(&mut self, oracle: &Oracle) -> TypeTag {
        match self.rng.gen_range(0..100u32) {
            0..=34 => TypeTag::Int,
            35..=49 => TypeTag::Float,
            50..=69 => TypeTag::Str,
            70..=79 => TypeTag::Bool,
            _ => match self.any_class(oracle) {
                Some(c) if !self.chance(0.04) => TypeTag::Ref(c),
                _ => TypeTag::Ref("Ghost".to_string()),
            },
        }
    }

    // ---- values and expressions -------------------------------------------

    fn gen_value(&mut self, tag: &TypeTag, oracle: &Oracle, allow_oids: bool) -> Value {
        match tag {
            TypeTag::Int => {
                if self.chance(0.03) {
                    Value::Int(i64::MAX - self.rng.gen_range(0..3))
                } else {
                    Value::Int(self.rng.gen_range(-4..30))
                }
            }
            TypeTag::Float => {
                if self.chance(0.03) {
                    Value::Float(1e308)
                } else {
                    Value::Float(self.rng.gen_range(-40..40) as f64 / 4.0)
                }
            }
            TypeTag::Str => Value::Str((*self.pick(STR_POOL)).to_string()),
            TypeTag::Bool => Value::Bool(self.rng.gen()),
            TypeTag::Ref(target) => {
                if !allow_oids || self.chance(0.45) {
                    return Value::Ref(None);
                }
                match oracle.extent(target) {
                    Ok(extent) if !extent.is_empty() && !self.chance(0.06) => {
                        Value::Ref(Some(*self.pick(&extent)))
                    }
                    _ => {
                        if self.chance(0.5) {
                            Value::Ref(None)
                        } else {
                            // A live-but-maybe-incompatible or dead oid.
                            Value::Ref(Some(self.any_oid(oracle)))
                        }
                    }
                }
            }
        }
    }

    /// Expression of (usually) the wanted type over the given visible
    /// names. `err_rate` injects type and runtime faults.
    fn gen_expr(&mut self, want: &TypeTag, cx: &ExprCx, oracle: &Oracle, depth: u32) -> Expr {
        if self.chance(cx.err_rate) {
            return self.gen_faulty_expr(cx, oracle);
        }
        let leaf = depth == 0 || self.chance(0.45);
        if !leaf {
            if let Some(e) = self.gen_compound_expr(want, cx, oracle, depth) {
                return e;
            }
        }
        self.gen_leaf_expr(want, cx, oracle)
    }

    fn gen_leaf_expr(&mut self, want: &TypeTag, cx: &ExprCx, oracle: &Oracle) -> Expr {
        // A visible name of the right type, a navigation to one, or a literal.
        let named: Vec<&(String, TypeTag)> = cx
            .names
            .iter()
            .filter(|(_, t)| compatible_leaf(t, want, oracle))
            .collect();
        if !named.is_empty() && self.chance(0.55) {
            let (name, _) = (*self.pick(&named)).clone();
            return Expr::Name(name);
        }
        if self.chance(0.25) {
            if let Some(e) = self.gen_navigation(want, cx, oracle) {
                return e;
            }
        }
        match self.gen_value(want, oracle, cx.allow_oids) {
            Value::Ref(Some(o)) => Expr::OidLit(o),
            v => Expr::Literal(v),
        }
    }

    /// `ref.attr` chains: pick a visible REF-typed name whose class chain
    /// declares an attribute of the wanted type.
    fn gen_navigation(&mut self, want: &TypeTag, cx: &ExprCx, oracle: &Oracle) -> Option<Expr> {
        let mut options = Vec::new();
        for (name, tag) in cx.names {
            let TypeTag::Ref(class) = tag else { continue };
            let Ok(chain) = oracle.chain(class) else { continue };
            for owner in chain {
                for a in oracle.local_attrs(&owner) {
                    if compatible_leaf(&a.ty, want, oracle) {
                        options.push((name.clone(), a.name.clone()));
                    }
                }
            }
        }
        if options.is_empty() {
            return None;
        }
        let (base, attr) = self.pick(&options).clone();
        Some(Expr::Navigate(Box::new(Expr::Name(base)), attr))
    }

    fn gen_compound_expr(
        &mut self,
        want: &TypeTag,
        cx: &ExprCx,
        oracle: &Oracle,
        depth: u32,
    ) -> Option<Expr> {
        let d = depth - 1;
        let e = match want {
            TypeTag::Int => {
                let op = *self.pick(&[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem]);
                Expr::Binary(
                    op,
                    Box::new(self.gen_expr(&TypeTag::Int, cx, oracle, d)),
                    Box::new(self.gen_expr(&TypeTag::Int, cx, oracle, d)),
                )
            }
            TypeTag::Float => {
                let op = *self.pick(&[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]);
                let int_side = self.chance(0.4);
                let l = self.gen_expr(&TypeTag::Float, cx, oracle, d);
                let r = if int_side {
                    self.gen_expr(&TypeTag::Int, cx, oracle, d)
                } else {
                    self.gen_expr(&TypeTag::Float, cx, oracle, d)
                };
                Expr::Binary(op, Box::new(l), Box::new(r))
            }
            TypeTag::Str => Expr::Binary(
                BinOp::Add,
                Box::new(self.gen_expr(&TypeTag::Str, cx, oracle, d)),
                Box::new(self.gen_expr(&TypeTag::Str, cx, oracle, d)),
            ),
            TypeTag::Bool => match self.rng.gen_range(0..4u32) {
                0 => {
                    let op = *self.pick(&[BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge]);
                    let t = if self.chance(0.7) {
                        TypeTag::Int
                    } else {
                        TypeTag::Float
                    };
                    Expr::Binary(
                        op,
                        Box::new(self.gen_expr(&t, cx, oracle, d)),
                        Box::new(self.gen_expr(&t, cx, oracle, d)),
                    )
                }
                1 => {
                    let op = *self.pick(&[BinOp::Eq, BinOp::Ne]);
                    let t = self.pick(&[TypeTag::Int, TypeTag::Str, TypeTag::Bool]).clone();
                    Expr::Binary(
                        op,
                        Box::new(self.gen_expr(&t, cx, oracle, d)),
                        Box::new(self.gen_expr(&t, cx, oracle, d)),
                    )
                }
                2 => {
                    let op = *self.pick(&[BinOp::And, BinOp::Or]);
                    Expr::Binary(
                        op,
                        Box::new(self.gen_expr(&TypeTag::Bool, cx, oracle, d)),
                        Box::new(self.gen_expr(&TypeTag::Bool, cx, oracle, d)),
                    )
                }
                _ => {
                    // Reference equality: a visible ref name against NULL
                    // or `this`, when either is available.
                    let refs: Vec<&(String, TypeTag)> = cx
                        .names
                        .iter()
                        .filter(|(_, t)| matches!(t, TypeTag::Ref(_)))
                        .collect();
                    if let (false, Some(_)) = (refs.is_empty(), refs.first()) {
                        let (name, _) = (*self.pick(&refs)).clone();
                        let rhs = if cx.has_this && self.chance(0.3) {
                            Expr::This
                        } else {
                            Expr::Literal(Value::Ref(None))
                        };
                        Expr::Binary(
                            *self.pick(&[BinOp::Eq, BinOp::Ne]),
                            Box::new(Expr::Name(name)),
                            Box::new(rhs),
                        )
                    } else {
                        Expr::Unary(
                            UnOp::Not,
                            Box::new(self.gen_expr(&TypeTag::Bool, cx, oracle, d)),
                        )
                    }
                }
            },
            TypeTag::Ref(_) => return None,
        };
        Some(e)
    }

    /// Something that should fail — at check time or at run time.
    fn gen_faulty_expr(&mut self, cx: &ExprCx, oracle: &Oracle) -> Expr {
        match self.rng.gen_range(0..6u32) {
            0 => Expr::Name(self.fresh_name("nosuch")),
            1 => Expr::Binary(
                BinOp::Div,
                Box::new(Expr::Literal(Value::Int(self.rng.gen_range(1..5)))),
                Box::new(Expr::Literal(Value::Int(0))),
            ),
            2 => Expr::Binary(
                BinOp::Mul,
                Box::new(Expr::Literal(Value::Int(i64::MAX / 2))),
                Box::new(Expr::Literal(Value::Int(3))),
            ),
            3 => Expr::Binary(
                BinOp::Add,
                Box::new(Expr::Literal(Value::Int(1))),
                Box::new(Expr::Literal(Value::Str("x".to_string()))),
            ),
            4 => Expr::Binary(
                BinOp::Eq,
                Box::new(Expr::Literal(Value::Int(1))),
                Box::new(Expr::Literal(Value::Float(1.0))),
            ),
            _ => {
                // Wrong-typed literal for whatever slot this lands in.
                let tag = self.gen_tag(oracle);
                match self.gen_value(&tag, oracle, cx.allow_oids) {
                    Value::Ref(Some(o)) => Expr::OidLit(o),
                    v => Expr::Literal(v),
                }
            }
        }
    }

    // ---- DDL ---------------------------------------------------------------

    /// Default values sit in a literal-only grammar slot: no sign, no oid
    /// literals. Values must stay renderable as plain literals.
    fn gen_default_value(&mut self, tag: &TypeTag) -> Value {
        match tag {
            TypeTag::Int => Value::Int(self.rng.gen_range(0..30)),
            TypeTag::Float => Value::Float(self.rng.gen_range(0..40) as f64 / 4.0),
            TypeTag::Str => Value::Str((*self.pick(STR_POOL)).to_string()),
            TypeTag::Bool => Value::Bool(self.rng.gen()),
            TypeTag::Ref(_) => Value::Ref(None),
        }
    }

    fn gen_attr_decl(&mut self, oracle: &Oracle, allow_missing_default: bool) -> AttrDecl {
        let name = if self.chance(0.02) {
            "oid".to_string()
        } else {
            (*self.pick(ATTR_POOL)).to_string()
        };
        let ty = self.gen_tag(oracle);
        let default = if allow_missing_default && self.chance(0.3) {
            None
        } else if self.chance(0.04) {
            // Deliberately mismatched default.
            let other = self.gen_tag(oracle);
            Some(self.gen_default_value(&other))
        } else {
            Some(self.gen_default_value(&ty))
        };
        AttrDecl { name, ty, default }
    }

    fn gen_params(&mut self, oracle: &Oracle) -> Vec<Param> {
        (0..self.rng.gen_range(0..3u32))
            .map(|i| Param {
                name: format!("p{i}"),
                ty: self.gen_tag(oracle),
            })
            .collect()
    }

    fn gen_method_decl(
        &mut self,
        oracle: &Oracle,
        visible: &[(String, TypeTag)],
    ) -> MethodDecl {
        let name = (*self.pick(METHOD_POOL)).to_string();
        let params = self.gen_params(oracle);
        let return_ty = self.gen_tag(oracle);
        let mut names: Vec<(String, TypeTag)> = visible.to_vec();
        names.extend(params.iter().map(|p| (p.name.clone(), p.ty.clone())));
        let cx = ExprCx {
            names: &names,
            allow_oids: false,
            has_this: true,
            err_rate: 0.05,
        };
        let body = self.gen_expr(&return_ty, &cx, oracle, 2);
        MethodDecl {
            name,
            params,
            return_ty,
            body,
        }
    }

    fn gen_ctor_decl(
        &mut self,
        oracle: &Oracle,
        locals: &[AttrDecl],
        inherited: &[(String, TypeTag)],
        is_class: bool,
    ) -> CtorDecl {
        let params = self.gen_params(oracle);
        let mut names: Vec<(String, TypeTag)> = inherited.to_vec();
        names.extend(locals.iter().map(|a| (a.name.clone(), a.ty.clone())));
        names.extend(params.iter().map(|p| (p.name.clone(), p.ty.clone())));
        let cx = ExprCx {
            names: &names,
            allow_oids: false,
            has_this: true,
            err_rate: 0.04,
        };
        let mut assignments = Vec::new();
        for a in locals {
            if self.chance(0.8) {
                let rhs = self.gen_expr(&a.ty, &cx, oracle, 1);
                assignments.push((a.name.clone(), rhs));
            }
        }
        for (name, tag) in inherited {
            // Legal for class constructors; a role constructor doing this
            // must be rejected at definition time.
            let p = if is_class { 0.2 } else { 0.04 };
            if self.chance(p) {
                let rhs = self.gen_expr(tag, &cx, oracle, 1);
                assignments.push((name.clone(), rhs));
            }
        }
        CtorDecl {
            params,
            assignments,
        }
    }

    fn gen_members(
        &mut self,
        oracle: &Oracle,
        inherited: &[(String, TypeTag)],
        is_class: bool,
    ) -> Vec<Member> {
        let mut attrs = Vec::new();
        for _ in 0..self.rng.gen_range(0..4u32) {
            attrs.push(self.gen_attr_decl(oracle, true));
        }
        let mut members: Vec<Member> = attrs.iter().cloned().map(Member::Attr).collect();
        if self.chance(0.3) {
            let mut visible = inherited.to_vec();
            visible.extend(attrs.iter().map(|a| (a.name.clone(), a.ty.clone())));
            members.push(Member::Method(self.gen_method_decl(oracle, &visible)));
        }
        if self.chance(0.25) {
            members.push(Member::Ctor(self.gen_ctor_decl(
                oracle, &attrs, inherited, is_class,
            )));
        }
        members
    }

    fn visible_types(&self, oracle: &Oracle, entry: &str) -> Vec<(String, TypeTag)> {
        oracle
            .visible_attrs(entry)
            .map(|v| {
                v.into_iter()
                    .map(|(_, a)| (a.name, a.ty))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn gen_create_class(&mut self, oracle: &Oracle) -> Statement {
        let name = if self.chance(0.04) {
            self.any_entry(oracle)
                .unwrap_or_else(|| self.fresh_name("K"))
        } else {
            self.fresh_name("K")
        };
        let parent = if self.chance(0.55) {
            if self.chance(0.04) {
                Some(self.fresh_name("Ghost"))
            } else {
                self.any_class(oracle)
            }
        } else {
            None
        };
        let inherited = parent
            .as_deref()
            .map(|p| self.visible_types(oracle, p))
            .unwrap_or_default();
        let members = self.gen_members(oracle, &inherited, true);
        Statement::CreateClass {
            name,
            parent,
            members,
        }
    }

    fn gen_create_role(&mut self, oracle: &Oracle) -> Statement {
        let name = if self.chance(0.04) {
            self.any_entry(oracle)
                .unwrap_or_else(|| self.fresh_name("R"))
        } else {
            self.fresh_name("R")
        };
        let base = if self.chance(0.05) {
            self.fresh_name("Ghost")
        } else {
            self.any_entry(oracle).unwrap_or_else(|| self.fresh_name("Ghost"))
        };
        let inherited = self.visible_types(oracle, &base);
        let members = self.gen_members(oracle, &inherited, false);
        Statement::CreateRole {
            name,
            base,
            members,
        }
    }

    fn gen_alter_add_attr(&mut self, oracle: &Oracle) -> Statement {
        let class = self
            .any_class(oracle)
            .unwrap_or_else(|| self.fresh_name("Ghost"));
        let omit_default = self.chance(0.15);
        let attr = self.gen_attr_decl(oracle, omit_default);
        Statement::AlterAddAttribute { class, attr }
    }

    fn gen_alter_add_method(&mut self, oracle: &Oracle) -> Statement {
        let class = self
            .any_class(oracle)
            .unwrap_or_else(|| self.fresh_name("Ghost"));
        let visible = self.visible_types(oracle, &class);
        let method = self.gen_method_decl(oracle, &visible);
        Statement::AlterAddMethod { class, method }
    }

    fn gen_alter_replace_method(&mut self, oracle: &Oracle) -> Statement {
        // Prefer a class that has a local method; fall back to error cases.
        let candidates: Vec<(&String, &MethodDecl)> = oracle
            .classes
            .iter()
            .flat_map(|(name, c)| c.methods.iter().map(move |m| (name, m)))
            .collect();
        if candidates.is_empty() || self.chance(0.1) {
            let class = self
                .any_class(oracle)
                .unwrap_or_else(|| self.fresh_name("Ghost"));
            let visible = self.visible_types(oracle, &class);
            let method = self.gen_method_decl(oracle, &visible);
            return Statement::AlterReplaceMethod { class, method };
        }
        let (class, existing) = {
            let (c, m) = *self.pick(&candidates);
            (c.clone(), (*m).clone())
        };
        let visible = self.visible_types(oracle, &class);
        let mut names = visible.clone();
        names.extend(existing.params.iter().map(|p| (p.name.clone(), p.ty.clone())));
        let cx = ExprCx {
            names: &names,
            allow_oids: false,
            has_this: true,
            err_rate: 0.05,
        };
        let return_ty = if self.chance(0.08) {
            self.gen_tag(oracle)
        } else {
            existing.return_ty.clone()
        };
        let body = self.gen_expr(&return_ty, &cx, oracle, 2);
        Statement::AlterReplaceMethod {
            class,
            method: MethodDecl {
                name: existing.name,
                params: existing.params,
                return_ty,
                body,
            },
        }
    }

    // ---- DML ---------------------------------------------------------------

    fn gen_inits(
        &mut self,
        oracle: &Oracle,
        attrs: &[AttrDecl],
        cx: &ExprCx,
    ) -> Vec<(String, Expr)> {
        let mut inits = Vec::new();
        for a in attrs {
            let include = a.default.is_none() || self.chance(0.35);
            if include && !self.chance(0.03) {
                let e = self.gen_expr(&a.ty, cx, oracle, 1);
                inits.push((a.name.clone(), e));
            }
        }
        if self.chance(0.04) {
            inits.push((
                self.fresh_name("nosuch"),
                Expr::Literal(Value::Int(0)),
            ));
        }
        if self.chance(0.02) && !inits.is_empty() {
            inits.push(inits[0].clone());
        }
        inits
    }

    fn gen_new(&mut self, oracle: &Oracle) -> Statement {
        let class = if self.chance(0.04) {
            self.fresh_name("Ghost")
        } else {
            self.any_class(oracle).unwrap_or_else(|| self.fresh_name("Ghost"))
        };
        let attrs: Vec<AttrDecl> = oracle
            .visible_attrs(&class)
            .map(|v| v.into_iter().map(|(_, a)| a).collect())
            .unwrap_or_default();
        let cx = ExprCx {
            names: &[],
            allow_oids: true,
            has_this: false,
            err_rate: 0.05,
        };
        let inits = self.gen_inits(oracle, &attrs, &cx);
        let oid = if self.chance(0.08) {
            if self.chance(0.4) && oracle.next_oid > 1 {
                Some(Oid(self.rng.gen_range(1..oracle.next_oid)))
            } else {
                Some(Oid(oracle.next_oid + self.rng.gen_range(0..3)))
            }
        } else {
            None
        };
        Statement::New { oid, class, inits }
    }

    fn gen_progress(&mut self, oracle: &Oracle) -> Statement {
        let oid = self.any_oid(oracle);
        let target = self.pick_progress_target(oracle, oid);
        let args = self.gen_progress_args(oracle, oid, &target);
        Statement::Progress { oid, target, args }
    }

    fn pick_progress_target(&mut self, oracle: &Oracle, oid: Oid) -> String {
        if self.chance(0.06) {
            return self
                .any_entry(oracle)
                .unwrap_or_else(|| self.fresh_name("Ghost"));
        }
        let Ok(obj) = oracle.object(oid) else {
            return self
                .any_entry(oracle)
                .unwrap_or_else(|| self.fresh_name("Ghost"));
        };
        let mut candidates: Vec<String> = oracle
            .classes
            .iter()
            .filter(|(_, c)| c.parent.as_deref() == Some(obj.mdc.as_str()))
            .map(|(n, _)| n.clone())
            .collect();
        // All roles, satisfied or not: unsatisfied ones exercise the
        // RoleBaseNotSatisfied / AlreadyInRole paths.
        candidates.extend(oracle.roles.keys().cloned());
        if candidates.is_empty() {
            return self
                .any_entry(oracle)
                .unwrap_or_else(|| self.fresh_name("Ghost"));
        }
        self.pick(&candidates).clone()
    }

    fn object_cx_names(&self, oracle: &Oracle, oid: Oid) -> Vec<(String, TypeTag)> {
        oracle
            .object(oid)
            .ok()
            .and_then(|obj| oracle.object_attr_decls(obj).ok())
            .map(|attrs| attrs.into_iter().map(|a| (a.name, a.ty)).collect())
            .unwrap_or_default()
    }

    fn gen_progress_args(&mut self, oracle: &Oracle, oid: Oid, target: &str) -> ProgressArgs {
        let names = self.object_cx_names(oracle, oid);
        let cx = ExprCx {
            names: &names,
            allow_oids: true,
            has_this: true,
            err_rate: 0.05,
        };
        let ctor = oracle
            .classes
            .get(target)
            .and_then(|c| c.ctor.clone())
            .or_else(|| oracle.roles.get(target).and_then(|r| r.ctor.clone()));
        match ctor {
            Some(ctor) if !self.chance(0.07) => {
                let mut exprs: Vec<Expr> = ctor
                    .params
                    .iter()
                    .map(|p| self.gen_expr(&p.ty, &cx, oracle, 1))
                    .collect();
                if self.chance(0.05) {
                    exprs.push(Expr::Literal(Value::Int(1)));
                }
                ProgressArgs::Positional(exprs)
            }
            Some(_) => {
                // Named args against a constructor: always an arity error.
                ProgressArgs::Named(vec![(
                    (*self.pick(ATTR_POOL)).to_string(),
                    Expr::Literal(Value::Int(1)),
                )])
            }
            None => {
                let locals: Vec<AttrDecl> = oracle.local_attrs(target).to_vec();
                if locals.is_empty() && self.chance(0.5) {
                    ProgressArgs::Positional(Vec::new())
                } else if self.chance(0.04) {
                    ProgressArgs::Positional(vec![Expr::Literal(Value::Int(1))])
                } else {
                    ProgressArgs::Named(self.gen_inits(oracle, &locals, &cx))
                }
            }
        }
    }

    fn gen_set(&mut self, oracle: &Oracle) -> Statement {
        let oid = self.any_oid(oracle);
        let names = self.object_cx_names(oracle, oid);
        let (attr, tag) = if names.is_empty() || self.chance(0.06) {
            ((*self.pick(ATTR_POOL)).to_string(), TypeTag::Int)
        } else {
            self.pick(&names).clone()
        };
        let cx = ExprCx {
            names: &names,
            allow_oids: true,
            has_this: true,
            err_rate: 0.06,
        };
        let expr = self.gen_expr(&tag, &cx, oracle, 2);
        Statement::Set { oid, attr, expr }
    }

    fn gen_call(&mut self, oracle: &Oracle) -> Statement {
        let oid = self.any_oid(oracle);
        let mut decls: Vec<MethodDecl> = Vec::new();
        if let Ok(obj) = oracle.object(oid) {
            if let Ok(chain) = oracle.chain(&obj.mdc) {
                for owner in chain {
                    decls.extend(oracle.local_methods(&owner).iter().cloned());
                }
            }
            for role in &obj.roles {
                decls.extend(oracle.local_methods(role).iter().cloned());
            }
        }
        let (method, params) = if decls.is_empty() || self.chance(0.07) {
            ((*self.pick(METHOD_POOL)).to_string(), Vec::new())
        } else {
            let d = self.pick(&decls).clone();
            (d.name, d.params)
        };
        let names = self.object_cx_names(oracle, oid);
        let cx = ExprCx {
            names: &names,
            allow_oids: true,
            has_this: true,
            err_rate: 0.05,
        };
        let mut args: Vec<Expr> = params
            .iter()
            .map(|p| self.gen_expr(&p.ty, &cx, oracle, 1))
            .collect();
        if self.chance(0.06) {
            args.push(Expr::Literal(Value::Bool(true)));
        }
        Statement::Call { oid, method, args }
    }

    fn gen_select(&mut self, oracle: &Oracle) -> Statement {
        let from = if self.chance(0.05) {
            self.fresh_name("Ghost")
        } else {
            self.any_entry(oracle).unwrap_or_else(|| self.fresh_name("Ghost"))
        };
        let names = self.visible_types(oracle, &from);
        let projection = if self.chance(0.4) || names.is_empty() {
            Projection::Star
        } else {
            let mut cols = Vec::new();
            if self.chance(0.3) {
                cols.push("oid".to_string());
            }
            for (n, _) in &names {
                if self.chance(0.5) {
                    cols.push(n.clone());
                }
            }
            if self.chance(0.06) {
                cols.push(self.fresh_name("nosuch"));
            }
            if cols.is_empty() {
                cols.push(names[0].0.clone());
            }
            Projection::Columns(cols)
        };
        let predicate = if self.chance(0.6) {
            let cx = ExprCx {
                names: &names,
                allow_oids: true,
                has_this: true,
                err_rate: 0.07,
            };
            Some(self.gen_expr(&TypeTag::Bool, &cx, oracle, 2))
        } else {
            None
        };
        Statement::Select {
            projection,
            from,
            predicate,
        }
    }

    fn gen_destroy(&mut self, oracle: &Oracle) -> Statement {
        Statement::Destroy {
            oid: self.any_oid(oracle),
        }
    }
}

/// What a generated expression may mention.
struct ExprCx<'a> {
    names: &'a [(String, TypeTag)],
    allow_oids: bool,
    has_this: bool,
    err_rate: f64,
}

/// Leaf compatibility: a name or navigation of type `have` can fill a slot
/// wanting `want` (references widen toward ancestors).
fn compatible_leaf(have: &TypeTag, want: &TypeTag, oracle: &Oracle) -> bool {
    match (want, have) {
        (TypeTag::Ref(w), TypeTag::Ref(h)) => oracle
            .chain(h)
            .map(|chain| chain.iter().any(|c| c == w))
            .unwrap_or(false),
        _ => have == want,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let mut a = Generator::new(7);
        let mut b = Generator::new(7);
        let oracle = Oracle::new();
        for _ in 0..50 {
            assert_eq!(a.statement(&oracle), b.statement(&oracle));
        }
    }

    #[test]
    fn short_runs_converge_on_all_seeds() {
        for seed in 0..4 {
            let stats = run(seed, 300).unwrap_or_else(|e| panic!("{e}"));
            assert_eq!(stats.executed, 300);
            assert!(stats.succeeded > 60, "too few successes: {stats:?}");
            assert!(stats.failed > 10, "too few failures: {stats:?}");
        }
    }
}
