//! Static typing and evaluation of the expression sublanguage.
//!
//! Checking and evaluation are two strictly separated phases: `check_expr`
//! types an expression against a [`Scope`] (what names mean, whether
//! `this` exists, whether object-id literals are admissible), and `eval`
//! computes a [`Value`] against an [`Env`] under the assumption that the
//! check passed. Evaluation is strict and left-to-right — both operands of
//! `AND`/`OR` are always evaluated — with checked 64-bit integer
//! arithmetic, truncating integer division, INT→FLOAT promotion in mixed
//! arithmetic, and hard errors instead of NULL propagation or NaN.

use std::collections::BTreeMap;
use std::fmt;

use crate::ast::{BinOp, CtorDecl, Expr, Param, UnOp};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::relstore::Store;
use crate::value::{Oid, TypeTag, Value};

/// The type of an expression, as established by `check_expr`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StaticType {
    Int,
    Float,
    Str,
    Bool,
    Ref(RefTy),
}

/// How much is statically known about a reference-typed expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefTy {
    /// A reference to an object known to be (at least) of this class.
    Known(String),
    /// The `this` object; its interface comes from the scope.
    This,
    /// The NULL literal.
    Null,
}

impl fmt::Display for StaticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StaticType::Int => write!(f, "INT"),
            StaticType::Float => write!(f, "FLOAT"),
            StaticType::Str => write!(f, "STRING"),
            StaticType::Bool => write!(f, "BOOL"),
            StaticType::Ref(RefTy::Known(c)) => write!(f, "REF<{c}>"),
            StaticType::Ref(RefTy::This) => write!(f, "REF<this>"),
            StaticType::Ref(RefTy::Null) => write!(f, "NULL"),
        }
    }
}

pub fn tag_to_static(tag: &TypeTag) -> StaticType {
    match tag {
        TypeTag::Int => StaticType::Int,
        TypeTag::Float => StaticType::Float,
        TypeTag::Str => StaticType::Str,
        TypeTag::Bool => StaticType::Bool,
        TypeTag::Ref(c) => StaticType::Ref(RefTy::Known(c.clone())),
    }
}

/// Name bindings visible while checking one expression.
pub struct Scope<'a> {
    catalog: &'a Catalog,
    params: Vec<(String, StaticType)>,
    /// Visible attributes (bare names and `this.x` resolve here).
    attrs: Vec<(String, TypeTag)>,
    /// Class anchoring `this`, when `this` is available.
    this_anchor: Option<String>,
    /// Object-id literals are typed against this store; absent in stored
    /// bodies, where they are banned.
    store: Option<&'a Store>,
}

impl<'a> Scope<'a> {
    /// Scope of a stored method or constructor body declared on `owner`.
    pub fn for_member(catalog: &'a Catalog, owner: &str, params: &[Param]) -> Result<Scope<'a>> {
        Ok(Scope {
            catalog,
            params: params
                .iter()
                .map(|p| (p.name.clone(), tag_to_static(&p.ty)))
                .collect(),
            attrs: visible_attr_types(catalog, owner)?,
            this_anchor: Some(catalog.anchor(owner)?.to_string()),
            store: None,
        })
    }

    /// Scope of an expression evaluated against a concrete object: its
    /// full effective interface is visible and `this` is the object.
    pub fn for_object(catalog: &'a Catalog, store: &'a Store, oid: Oid) -> Result<Scope<'a>> {
        let header = store.header(oid)?;
        let mut attrs = Vec::new();
        for owner in catalog.chain(&header.mdc)? {
            for a in catalog.get(owner).unwrap().attrs() {
                attrs.push((a.name.clone(), a.ty.clone()));
            }
        }
        for role in &header.roles {
            for a in catalog.entry(role)?.attrs() {
                attrs.push((a.name.clone(), a.ty.clone()));
            }
        }
        Ok(Scope {
            catalog,
            params: Vec::new(),
            attrs,
            this_anchor: Some(header.mdc.clone()),
            store: Some(store),
        })
    }

    /// Scope of a WHERE predicate over the extent of a class or role: the
    /// entry's declared interface, uniform across all rows.
    pub fn for_entry(catalog: &'a Catalog, store: &'a Store, entry: &str) -> Result<Scope<'a>> {
        Ok(Scope {
            catalog,
            params: Vec::new(),
            attrs: visible_attr_types(catalog, entry)?,
            this_anchor: Some(catalog.anchor(entry)?.to_string()),
            store: Some(store),
        })
    }

    /// Scope of a NEW initializer: no object yet, no visible names, but
    /// object-id literals are fine.
    pub fn for_new(catalog: &'a Catalog, store: &'a Store) -> Scope<'a> {
        Scope {
            catalog,
            params: Vec::new(),
            attrs: Vec::new(),
            this_anchor: None,
            store: Some(store),
        }
    }

    pub fn this_class(&self) -> Option<&str> {
        self.this_anchor.as_deref()
    }

    fn attr_type(&self, name: &str) -> Option<&TypeTag> {
        self.attrs.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn visible_attr_types(catalog: &Catalog, entry: &str) -> Result<Vec<(String, TypeTag)>> {
    Ok(catalog
        .visible_attrs(entry)?
        .into_iter()
        .map(|(_, a)| (a.name.clone(), a.ty.clone()))
        .collect())
}

/// True when a value of static type `actual` may be stored into a slot
/// declared `declared`. References widen toward ancestors; NULL stores
/// into any reference slot; scalars match exactly (no INT→FLOAT here).
pub fn assignment_compatible(
    catalog: &Catalog,
    declared: &TypeTag,
    actual: &StaticType,
    this_anchor: Option<&str>,
) -> bool {
    match (declared, actual) {
        (TypeTag::Int, StaticType::Int)
        | (TypeTag::Float, StaticType::Float)
        | (TypeTag::Str, StaticType::Str)
        | (TypeTag::Bool, StaticType::Bool) => true,
        (TypeTag::Ref(_), StaticType::Ref(RefTy::Null)) => true,
        (TypeTag::Ref(t), StaticType::Ref(RefTy::Known(c))) => catalog
            .chain(c)
            .map(|chain| chain.contains(&t.as_str()))
            .unwrap_or(false),
        (TypeTag::Ref(t), StaticType::Ref(RefTy::This)) => this_anchor
            .and_then(|a| catalog.chain(a).ok())
            .map(|chain| chain.contains(&t.as_str()))
            .unwrap_or(false),
        _ => false,
    }
}

pub fn check_expr(expr: &Expr, scope: &Scope<'_>) -> Result<StaticType> {
    match expr {
        Expr::Literal(v) => Ok(match v {
            Value::Int(_) => StaticType::Int,
            Value::Float(_) => StaticType::Float,
            Value::Str(_) => StaticType::Str,
            Value::Bool(_) => StaticType::Bool,
            Value::Ref(None) => StaticType::Ref(RefTy::Null),
            Value::Ref(Some(o)) => return check_oid(*o, scope),
        }),
        Expr::Name(n) => {
            if let Some((_, t)) = scope.params.iter().find(|(p, _)| p == n) {
                return Ok(t.clone());
            }
            if let Some(tag) = scope.attr_type(n) {
                return Ok(tag_to_static(tag));
            }
            Err(Error::NameError(format!("unknown name `{n}`")))
        }
        Expr::This => {
            if scope.this_anchor.is_some() {
                Ok(StaticType::Ref(RefTy::This))
            } else {
                Err(Error::NameError("`this` is not available here".to_string()))
            }
        }
        Expr::OidLit(o) => check_oid(*o, scope),
        Expr::Navigate(base, attr) => {
            let bt = check_expr(base, scope)?;
            match bt {
                StaticType::Ref(RefTy::Known(c)) => {
                    match scope.catalog.find_chain_attr(&c, attr)? {
                        Some((_, decl)) => Ok(tag_to_static(&decl.ty)),
                        None => Err(Error::NameError(format!(
                            "class `{c}` has no attribute `{attr}`"
                        ))),
                    }
                }
                StaticType::Ref(RefTy::This) => match scope.attr_type(attr) {
                    Some(tag) => Ok(tag_to_static(tag)),
                    None => Err(Error::NameError(format!(
                        "no attribute `{attr}` on `this`"
                    ))),
                },
                StaticType::Ref(RefTy::Null) => Err(Error::TypeMismatch(
                    "cannot navigate from NULL".to_string(),
                )),
                other => Err(Error::TypeMismatch(format!(
                    "cannot navigate a value of type {other}"
                ))),
            }
        }
        Expr::Unary(op, inner) => {
            let t = check_expr(inner, scope)?;
            match (op, &t) {
                (UnOp::Neg, StaticType::Int) | (UnOp::Neg, StaticType::Float) => Ok(t),
                (UnOp::Not, StaticType::Bool) => Ok(StaticType::Bool),
                (UnOp::Neg, _) => Err(Error::TypeMismatch(format!("`-` applied to {t}"))),
                (UnOp::Not, _) => Err(Error::TypeMismatch(format!("`NOT` applied to {t}"))),
            }
        }
        Expr::Binary(op, l, r) => {
            let lt = check_expr(l, scope)?;
            let rt = check_expr(r, scope)?;
            check_binary(*op, &lt, &rt)
        }
    }
}

fn check_oid(oid: Oid, scope: &Scope<'_>) -> Result<StaticType> {
    let Some(store) = scope.store else {
        return Err(Error::TypeMismatch(format!(
            "object id `{oid}` is not allowed in a stored body"
        )));
    };
    let header = store.header(oid)?;
    Ok(StaticType::Ref(RefTy::Known(header.mdc.clone())))
}

fn check_binary(op: BinOp, lt: &StaticType, rt: &StaticType) -> Result<StaticType> {
    use StaticType::*;
    let mismatch = || Error::TypeMismatch(format!("`{}` on {lt} and {rt}", op.symbol()));
    match op {
        BinOp::Add => match (lt, rt) {
            (Int, Int) => Ok(Int),
            (Int, Float) | (Float, Int) | (Float, Float) => Ok(Float),
            (Str, Str) => Ok(Str),
            _ => Err(mismatch()),
        },
        BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => match (lt, rt) {
            (Int, Int) => Ok(Int),
            (Int, Float) | (Float, Int) | (Float, Float) => Ok(Float),
            _ => Err(mismatch()),
        },
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => match (lt, rt) {
            (Int | Float, Int | Float) => Ok(Bool),
            _ => Err(mismatch()),
        },
        BinOp::Eq | BinOp::Ne => match (lt, rt) {
            (Int, Int) | (Float, Float) | (Str, Str) | (Bool, Bool) | (Ref(_), Ref(_)) => Ok(Bool),
            _ => Err(mismatch()),
        },
        BinOp::And | BinOp::Or => match (lt, rt) {
            (Bool, Bool) => Ok(Bool),
            _ => Err(mismatch()),
        },
    }
}

/// Constructor-evaluation overlay: values already assigned (or defaulted)
/// for the progression target, consulted before the store for reads of
/// `this`.
#[derive(Debug)]
pub struct Pending {
    /// Attribute names declared locally on the progression target.
    pub locals: Vec<String>,
    pub values: BTreeMap<String, Value>,
}

/// Dynamic context for `eval`.
pub struct Env<'a> {
    pub catalog: &'a Catalog,
    pub store: &'a Store,
    pub this_oid: Option<Oid>,
    pub params: &'a [(String, Value)],
    pub pending: Option<&'a Pending>,
}

impl<'a> Env<'a> {
    pub fn plain(catalog: &'a Catalog, store: &'a Store, this_oid: Option<Oid>) -> Env<'a> {
        Env {
            catalog,
            store,
            this_oid,
            params: &[],
            pending: None,
        }
    }

    /// Read an attribute of a live object, honoring the constructor
    /// overlay when the object is `this`.
    fn read_attr(&self, oid: Oid, attr: &str) -> Result<Value> {
        let is_this = self.this_oid == Some(oid);
        if is_this {
            if let Some(p) = self.pending {
                if let Some(v) = p.values.get(attr) {
                    return Ok(v.clone());
                }
            }
        }
        let header = self.store.header(oid)?;
        for owner in self.catalog.chain(&header.mdc)? {
            if let Some(v) = self.store.cell(owner, oid, attr) {
                return Ok(v.clone());
            }
        }
        for role in &header.roles {
            if let Some(v) = self.store.cell(role, oid, attr) {
                return Ok(v.clone());
            }
        }
        if is_this {
            if let Some(p) = self.pending {
                if p.locals.iter().any(|l| l == attr) {
                    return Err(Error::MissingInitializer(attr.to_string()));
                }
            }
        }
        Err(Error::NameError(format!("no attribute `{attr}` on {oid}")))
    }
}

pub fn eval(expr: &Expr, env: &Env<'_>) -> Result<Value> {
    match expr {
        Expr::Literal(v) => Ok(v.clone()),
        Expr::Name(n) => {
            if let Some((_, v)) = env.params.iter().find(|(p, _)| p == n) {
                return Ok(v.clone());
            }
            let oid = env
                .this_oid
                .ok_or_else(|| Error::NameError(format!("unknown name `{n}`")))?;
            env.read_attr(oid, n)
        }
        Expr::This => Ok(Value::Ref(Some(env.this_oid.expect("checked: this in scope")))),
        Expr::OidLit(o) => Ok(Value::Ref(Some(*o))),
        Expr::Navigate(base, attr) => match eval(base, env)? {
            Value::Ref(None) => Err(Error::NullReference(format!(
                "navigating `.{attr}` on NULL"
            ))),
            Value::Ref(Some(o)) => env.read_attr(o, attr),
            other => Err(Error::TypeMismatch(format!(
                "cannot navigate a value of type {}",
                other.kind_name()
            ))),
        },
        Expr::Unary(UnOp::Neg, inner) => match eval(inner, env)? {
            Value::Int(i) => i
                .checked_neg()
                .map(Value::Int)
                .ok_or_else(|| Error::IntOverflow(format!("-({i})"))),
            Value::Float(x) => Ok(Value::Float(-x)),
            other => Err(Error::TypeMismatch(format!(
                "`-` applied to {}",
                other.kind_name()
            ))),
        },
        Expr::Unary(UnOp::Not, inner) => match eval(inner, env)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            other => Err(Error::TypeMismatch(format!(
                "`NOT` applied to {}",
                other.kind_name()
            ))),
        },
        Expr::Binary(op, l, r) => {
            let lv = eval(l, env)?;
            let rv = eval(r, env)?;
            eval_binary(*op, lv, rv)
        }
    }
}

fn eval_binary(op: BinOp, lv: Value, rv: Value) -> Result<Value> {
    use BinOp::*;
    use Value::*;
    let bad = |l: &Value, r: &Value| {
        Error::TypeMismatch(format!(
            "`{}` on {} and {}",
            op.symbol(),
            l.kind_name(),
            r.kind_name()
        ))
    };
    match op {
        Add | Sub | Mul | Div | Rem => match (&lv, &rv) {
            (Int(a), Int(b)) => int_arith(op, *a, *b),
            (Float(_), Float(_)) | (Int(_), Float(_)) | (Float(_), Int(_)) => {
                float_arith(op, promote(&lv), promote(&rv))
            }
            (Str(a), Str(b)) if op == Add => Ok(Str(format!("{a}{b}"))),
            _ => Err(bad(&lv, &rv)),
        },
        Lt | Le | Gt | Ge => {
            let ord = match (&lv, &rv) {
                (Int(a), Int(b)) => a.partial_cmp(b),
                (Float(_), Float(_)) | (Int(_), Float(_)) | (Float(_), Int(_)) => {
                    promote(&lv).partial_cmp(&promote(&rv))
                }
                _ => return Err(bad(&lv, &rv)),
            };
            let ord = ord.expect("stored floats are finite");
            Ok(Bool(match op {
                Lt => ord.is_lt(),
                Le => ord.is_le(),
                Gt => ord.is_gt(),
                Ge => ord.is_ge(),
                _ => unreachable!(),
            }))
        }
        Eq | Ne => {
            let same = match (&lv, &rv) {
                (Int(a), Int(b)) => a == b,
                (Float(a), Float(b)) => a == b,
                (Str(a), Str(b)) => a == b,
                (Bool(a), Bool(b)) => a == b,
                (Ref(a), Ref(b)) => a == b,
                _ => return Err(bad(&lv, &rv)),
            };
            Ok(Bool(if op == Eq { same } else { !same }))
        }
        And | Or => match (&lv, &rv) {
            (Bool(a), Bool(b)) => Ok(Bool(if op == And { *a && *b } else { *a || *b })),
            _ => Err(bad(&lv, &rv)),
        },
    }
}

fn promote(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(x) => *x,
        _ => unreachable!("numeric operand"),
    }
}

fn int_arith(op: BinOp, a: i64, b: i64) -> Result<Value> {
    let describe = || format!("{a} {} {b}", op.symbol());
    let out = match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Div | BinOp::Rem => {
            if b == 0 {
                return Err(Error::DivideByZero);
            }
            if op == BinOp::Div {
                a.checked_div(b)
            } else {
                a.checked_rem(b)
            }
        }
        _ => unreachable!(),
    };
    out.map(Value::Int)
        .ok_or_else(|| Error::IntOverflow(describe()))
}

fn float_arith(op: BinOp, a: f64, b: f64) -> Result<Value> {
    if matches!(op, BinOp::Div | BinOp::Rem) && b == 0.0 {
        return Err(Error::DivideByZero);
    }
    let out = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Rem => a % b,
        _ => unreachable!(),
    };
    crate::value::check_finite(out, &format!("{a} {} {b}", op.symbol())).map(Value::Float)
}

/// Result of running a constructor: the complete row for the target's
/// relation plus writes to inherited attributes, in assignment order.
#[derive(Debug)]
pub struct CtorOutcome {
    pub row: Vec<Value>,
    pub inherited: Vec<(String, Value)>,
}

/// Run a constructor body for a progression of `oid` into `target`.
/// `args` are already-evaluated parameter values. Assignments execute top
/// to bottom; each one becomes visible to later expressions through the
/// pending overlay. Nothing is written to the store here.
pub fn run_constructor(
    catalog: &Catalog,
    store: &Store,
    oid: Oid,
    target: &str,
    ctor: &CtorDecl,
    args: Vec<Value>,
) -> Result<CtorOutcome> {
    let def = catalog.entry(target)?;
    let mut pending = Pending {
        locals: def.attrs().iter().map(|a| a.name.clone()).collect(),
        values: def
            .attrs()
            .iter()
            .filter_map(|a| a.default.clone().map(|d| (a.name.clone(), d)))
            .collect(),
    };
    assert_eq!(ctor.params.len(), args.len(), "arity checked by caller");
    let params: Vec<(String, Value)> = ctor
        .params
        .iter()
        .map(|p| p.name.clone())
        .zip(args)
        .collect();

    let mut inherited = Vec::new();
    for (attr, expr) in &ctor.assignments {
        let env = Env {
            catalog,
            store,
            this_oid: Some(oid),
            params: &params,
            pending: Some(&pending),
        };
        let v = eval(expr, &env)?;
        pending.values.insert(attr.clone(), v.clone());
        if !pending.locals.iter().any(|l| l == attr) {
            inherited.push((attr.clone(), v));
        }
    }

    let mut row = Vec::new();
    for a in def.attrs() {
        match pending.values.get(&a.name) {
            Some(v) => row.push(v.clone()),
            None => return Err(Error::MissingInitializer(a.name.clone())),
        }
    }
    Ok(CtorOutcome { row, inherited })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser;

    fn expr(src: &str) -> Expr {
        // Piggyback on SELECT parsing to get a bare expression.
        let stmt = parser::parse_statement(&format!("SELECT * FROM X WHERE {src}")).unwrap();
        match stmt {
            crate::ast::Statement::Select { predicate, .. } => predicate.unwrap(),
            _ => unreachable!(),
        }
    }

    fn eval_pure(src: &str) -> Result<Value> {
        let catalog = Catalog::new();
        let store = Store::new();
        let env = Env::plain(&catalog, &store, None);
        eval(&expr(src), &env)
    }

    #[test]
    fn integer_division_truncates_toward_zero() {
        assert_eq!(eval_pure("-7 / 2").unwrap(), Value::Int(-3));
        assert_eq!(eval_pure("7 / -2").unwrap(), Value::Int(-3));
        assert_eq!(eval_pure("-7 % 2").unwrap(), Value::Int(-1));
    }

    #[test]
    fn arithmetic_errors() {
        assert!(matches!(eval_pure("1 / 0"), Err(Error::DivideByZero)));
        assert!(matches!(eval_pure("1 % 0"), Err(Error::DivideByZero)));
        assert!(matches!(eval_pure("1.0 / 0.0"), Err(Error::DivideByZero)));
        assert!(matches!(
            eval_pure("1.0 / -0.0"),
            Err(Error::DivideByZero)
        ));
        assert!(matches!(
            eval_pure("9223372036854775807 + 1"),
            Err(Error::IntOverflow(_))
        ));
        assert!(matches!(
            eval_pure("-9223372036854775808 / -1"),
            Err(Error::IntOverflow(_))
        ));
        assert!(matches!(
            eval_pure("1e308 * 10.0"),
            Err(Error::FloatOverflow(_))
        ));
    }

    #[test]
    fn strict_boolean_operators_evaluate_both_sides() {
        assert!(matches!(
            eval_pure("false AND 1 / 0 == 1"),
            Err(Error::DivideByZero)
        ));
        assert!(matches!(
            eval_pure("true OR 1 / 0 == 1"),
            Err(Error::DivideByZero)
        ));
    }

    #[test]
    fn mixed_arithmetic_promotes() {
        assert_eq!(eval_pure("1 + 0.5").unwrap(), Value::Float(1.5));
        assert_eq!(eval_pure("3 * 2.0").unwrap(), Value::Float(6.0));
    }

    #[test]
    fn string_concatenation() {
        assert_eq!(
            eval_pure("\"ab\" + \"cd\"").unwrap(),
            Value::Str("abcd".to_string())
        );
    }

    #[test]
    fn float_equality_is_ieee() {
        assert_eq!(eval_pure("0.0 == -0.0").unwrap(), Value::Bool(true));
    }

    #[test]
    fn checks_reject_type_errors() {
        let catalog = Catalog::new();
        let store = Store::new();
        let scope = Scope::for_new(&catalog, &store);
        for bad in [
            "1 + \"a\"",
            "1 < \"a\"",
            "\"a\" < \"b\"",
            "1 == 1.0",
            "true + false",
            "NOT 1",
            "-true",
            "NULL + 1",
        ] {
            let err = check_expr(&expr(bad), &scope).unwrap_err();
            assert!(
                matches!(err, Error::TypeMismatch(_)),
                "{bad}: {err:?}"
            );
        }
        let err = check_expr(&expr("salary + 1"), &scope).unwrap_err();
        assert!(matches!(err, Error::NameError(_)));
    }

    #[test]
    fn null_comparisons_type_check() {
        let catalog = Catalog::new();
        let store = Store::new();
        let scope = Scope::for_new(&catalog, &store);
        assert_eq!(
            check_expr(&expr("NULL == NULL"), &scope).unwrap(),
            StaticType::Bool
        );
        assert_eq!(eval_pure("NULL == NULL").unwrap(), Value::Bool(true));
        assert_eq!(eval_pure("NULL != NULL").unwrap(), Value::Bool(false));
    }
}
