//! Abstract syntax for the command language.
//!
//! Structural equality on these types is exact: float literals compare
//! bit-for-bit (see [`Value`]), so `parse(canonicalize(s)) == s` is a
//! meaningful round-trip check.

use crate::value::{Oid, TypeTag, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct AttrDecl {
    pub name: String,
    pub ty: TypeTag,
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: TypeTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub return_ty: TypeTag,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtorDecl {
    pub params: Vec<Param>,
    /// `attr := expr;` steps, applied top to bottom; a later step observes
    /// the effects of earlier ones.
    pub assignments: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Member {
    Attr(AttrDecl),
    Method(MethodDecl),
    Ctor(CtorDecl),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Star,
    /// Explicit column names; `oid` entries are allowed and collapse into
    /// the implicit leading oid column.
    Columns(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgressArgs {
    /// Constructor arguments. Empty parentheses parse as this variant.
    Positional(Vec<Expr>),
    Named(Vec<(String, Expr)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    CreateClass {
        name: String,
        parent: Option<String>,
        members: Vec<Member>,
    },
    CreateRole {
        name: String,
        base: String,
        members: Vec<Member>,
    },
    AlterAddAttribute {
        class: String,
        attr: AttrDecl,
    },
    AlterAddMethod {
        class: String,
        method: MethodDecl,
    },
    AlterReplaceMethod {
        class: String,
        method: MethodDecl,
    },
    New {
        /// Explicit OID as written in the journal (`NEW #3 = C(...)`);
        /// `None` lets the engine allocate.
        oid: Option<Oid>,
        class: String,
        inits: Vec<(String, Expr)>,
    },
    Progress {
        oid: Oid,
        target: String,
        args: ProgressArgs,
    },
    Set {
        oid: Oid,
        attr: String,
        expr: Expr,
    },
    Call {
        oid: Oid,
        method: String,
        args: Vec<Expr>,
    },
    Select {
        projection: Projection,
        from: String,
        predicate: Option<Expr>,
    },
    Destroy {
        oid: Oid,
    },
}

impl Statement {
    /// Statements that change catalog or store state and therefore must be
    /// journaled; SELECT and CALL are read-only.
    pub fn is_mutating(&self) -> bool {
        !matches!(self, Statement::Select { .. } | Statement::Call { .. })
    }
}

/// A REPL/script-level statement: either a plain statement or a
/// `LET name = NEW ...` binding. Bindings never reach the engine or the
/// journal; the shell resolves them to `#oid` forms first.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionStatement {
    Plain(Statement),
    Let { name: String, stmt: Statement },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "AND",
            BinOp::Or => "OR",
        }
    }

    pub fn is_comparison(&self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Literal value. Negative numeric literals are folded here by the
    /// parser; `Ref` literals are `NULL` only (object references are
    /// [`Expr::OidLit`]).
    Literal(Value),
    /// Attribute or parameter reference, resolved during type checking
    /// (parameters shadow-free by construction: declaring a parameter with
    /// a visible attribute's name is rejected).
    Name(String),
    This,
    OidLit(Oid),
    Navigate(Box<Expr>, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}
