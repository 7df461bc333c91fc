//! Canonical textual form of statements and expressions.
//!
//! The journal and the snapshot CATALOG section store statements in this
//! form, so the rendering is pinned: single line, fixed spacing, named
//! initializers in declaration order (the executor orders them before
//! journaling), minimal parentheses. `parse_statement(canonicalize(s))`
//! structurally equals `s` for every well-formed statement.

use std::fmt;

use crate::ast::{
    AttrDecl, BinOp, CtorDecl, Expr, Member, MethodDecl, Param, ProgressArgs, Projection,
    Statement, UnOp,
};

/// Render a statement as its canonical single-line text.
pub fn canonicalize(stmt: &Statement) -> String {
    stmt.to_string()
}

// Binding strength, loosest to tightest. Comparison is non-associative
// (`a < b < c` is not grammatical), so comparison operands at the same
// level get parenthesized on both sides.
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ADD: u8 = 5;
const PREC_MUL: u8 = 6;
const PREC_NEG: u8 = 7;
const PREC_POST: u8 = 8;
const PREC_ATOM: u8 = 9;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Literal(_) | Expr::Name(_) | Expr::This | Expr::OidLit(_) => PREC_ATOM,
        Expr::Navigate(..) => PREC_POST,
        Expr::Unary(UnOp::Neg, _) => PREC_NEG,
        Expr::Unary(UnOp::Not, _) => PREC_NOT,
        Expr::Binary(op, ..) => match op {
            BinOp::Or => PREC_OR,
            BinOp::And => PREC_AND,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => PREC_CMP,
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div | BinOp::Rem => PREC_MUL,
        },
    }
}

fn render_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Literal(v) => out.push_str(&v.render()),
        Expr::Name(n) => out.push_str(n),
        Expr::This => out.push_str("this"),
        Expr::OidLit(o) => out.push_str(&o.to_string()),
        Expr::Navigate(base, attr) => {
            render_child(base, PREC_POST, false, out);
            out.push('.');
            out.push_str(attr);
        }
        Expr::Unary(UnOp::Neg, operand) => {
            let mut rendered = String::new();
            render_child(operand, PREC_NEG, false, &mut rendered);
            out.push('-');
            // `--` would start a comment; keep adjacent minuses apart.
            if rendered.starts_with('-') {
                out.push(' ');
            }
            out.push_str(&rendered);
        }
        Expr::Unary(UnOp::Not, operand) => {
            out.push_str("NOT ");
            render_child(operand, PREC_NOT, false, out);
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = prec(e);
            let cmp = op.is_comparison();
            render_child(lhs, p, cmp, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            render_child(rhs, p, true, out);
        }
    }
}

fn render_child(child: &Expr, parent_prec: u8, parens_at_equal: bool, out: &mut String) {
    let cp = prec(child);
    let need = cp < parent_prec || (parens_at_equal && cp == parent_prec);
    if need {
        out.push('(');
        render_expr(child, out);
        out.push(')');
    } else {
        render_expr(child, out);
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        render_expr(self, &mut s);
        f.write_str(&s)
    }
}

fn write_params(f: &mut fmt::Formatter<'_>, params: &[Param]) -> fmt::Result {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{}: {}", p.name, p.ty)?;
    }
    Ok(())
}

fn write_named_args(f: &mut fmt::Formatter<'_>, args: &[(String, Expr)]) -> fmt::Result {
    for (i, (name, expr)) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{name} = {expr}")?;
    }
    Ok(())
}

fn write_pos_args(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    for (i, expr) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{expr}")?;
    }
    Ok(())
}

impl fmt::Display for AttrDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.ty)?;
        if let Some(d) = &self.default {
            write!(f, " = {}", d.render())?;
        }
        f.write_str(";")
    }
}

impl fmt::Display for MethodDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "METHOD {}(", self.name)?;
        write_params(f, &self.params)?;
        write!(f, "): {} = {};", self.return_ty, self.body)
    }
}

impl fmt::Display for CtorDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CONSTRUCTOR(")?;
        write_params(f, &self.params)?;
        f.write_str(") {")?;
        for (name, expr) in &self.assignments {
            write!(f, " {name} := {expr};")?;
        }
        f.write_str(" }")
    }
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Member::Attr(a) => a.fmt(f),
            Member::Method(m) => m.fmt(f),
            Member::Ctor(c) => c.fmt(f),
        }
    }
}

fn write_members(f: &mut fmt::Formatter<'_>, members: &[Member]) -> fmt::Result {
    f.write_str("{")?;
    for m in members {
        write!(f, " {m}")?;
    }
    f.write_str(" }")
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::CreateClass {
                name,
                parent,
                members,
            } => {
                write!(f, "CREATE CLASS {name}")?;
                if let Some(p) = parent {
                    write!(f, " EXTENDS {p}")?;
                }
                f.write_str(" ")?;
                write_members(f, members)
            }
            Statement::CreateRole {
                name,
                base,
                members,
            } => {
                write!(f, "CREATE ROLE {name} FOR {base} ")?;
                write_members(f, members)
            }
            Statement::AlterAddAttribute { class, attr } => {
                write!(f, "ALTER CLASS {class} ADD {attr}")
            }
            Statement::AlterAddMethod { class, method } => {
                write!(f, "ALTER CLASS {class} ADD {method}")
            }
            Statement::AlterReplaceMethod { class, method } => {
                write!(f, "ALTER CLASS {class} REPLACE {method}")
            }
            Statement::New { oid, class, inits } => {
                f.write_str("NEW ")?;
                if let Some(o) = oid {
                    write!(f, "{o} = ")?;
                }
                write!(f, "{class}(")?;
                write_named_args(f, inits)?;
                f.write_str(")")
            }
            Statement::Progress { oid, target, args } => {
                write!(f, "PROGRESS {oid} TO {target}(")?;
                match args {
                    ProgressArgs::Positional(exprs) => write_pos_args(f, exprs)?,
                    ProgressArgs::Named(inits) => write_named_args(f, inits)?,
                }
                f.write_str(")")
            }
            Statement::Set { oid, attr, expr } => write!(f, "SET {oid}.{attr} = {expr}"),
            Statement::Call { oid, method, args } => {
                write!(f, "CALL {oid}.{method}(")?;
                write_pos_args(f, args)?;
                f.write_str(")")
            }
            Statement::Select {
                projection,
                from,
                predicate,
            } => {
                f.write_str("SELECT ")?;
                match projection {
                    Projection::Star => f.write_str("*")?,
                    Projection::Columns(cols) => f.write_str(&cols.join(", "))?,
                }
                write!(f, " FROM {from}")?;
                if let Some(p) = predicate {
                    write!(f, " WHERE {p}")?;
                }
                Ok(())
            }
            Statement::Destroy { oid } => write!(f, "DESTROY {oid}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{Oid, TypeTag, Value};

    fn lit(n: i64) -> Expr {
        Expr::Literal(Value::Int(n))
    }

    #[test]
    fn set_statement_fixed_rendering() {
        let s = Statement::Set {
            oid: Oid(1),
            attr: "salary".into(),
            expr: lit(10),
        };
        assert_eq!(canonicalize(&s), "SET #1.salary = 10");
    }

    #[test]
    fn new_statement_fixed_rendering() {
        let s = Statement::New {
            oid: Some(Oid(3)),
            class: "Employee".into(),
            inits: vec![("name".into(), Expr::Literal(Value::Str("Ann".into())))],
        };
        assert_eq!(canonicalize(&s), "NEW #3 = Employee(name = \"Ann\")");
    }

    #[test]
    fn minimal_parentheses() {
        // (1 + 2) * 3 keeps parens; 1 + 2 * 3 drops them.
        let grouped = Expr::Binary(
            BinOp::Mul,
            Box::new(Expr::Binary(BinOp::Add, Box::new(lit(1)), Box::new(lit(2)))),
            Box::new(lit(3)),
        );
        assert_eq!(grouped.to_string(), "(1 + 2) * 3");
        let flat = Expr::Binary(
            BinOp::Add,
            Box::new(lit(1)),
            Box::new(Expr::Binary(BinOp::Mul, Box::new(lit(2)), Box::new(lit(3)))),
        );
        assert_eq!(flat.to_string(), "1 + 2 * 3");
    }

    #[test]
    fn left_associative_right_child_parenthesized() {
        let e = Expr::Binary(
            BinOp::Sub,
            Box::new(lit(1)),
            Box::new(Expr::Binary(BinOp::Sub, Box::new(lit(2)), Box::new(lit(3)))),
        );
        assert_eq!(e.to_string(), "1 - (2 - 3)");
    }

    #[test]
    fn comparison_is_non_associative() {
        let e = Expr::Binary(
            BinOp::Lt,
            Box::new(Expr::Binary(BinOp::Lt, Box::new(lit(1)), Box::new(lit(2)))),
            Box::new(lit(3)),
        );
        assert_eq!(e.to_string(), "(1 < 2) < 3");
    }

    #[test]
    fn adjacent_minuses_never_form_a_comment() {
        let e = Expr::Unary(UnOp::Neg, Box::new(lit(-5)));
        assert_eq!(e.to_string(), "- -5");
        let e = Expr::Unary(
            UnOp::Neg,
            Box::new(Expr::Unary(UnOp::Neg, Box::new(Expr::Name("x".into())))),
        );
        assert_eq!(e.to_string(), "- -x");
        let e = Expr::Binary(BinOp::Sub, Box::new(lit(1)), Box::new(lit(-2)));
        assert_eq!(e.to_string(), "1 - -2");
    }

    #[test]
    fn create_class_rendering() {
        let s = Statement::CreateClass {
            name: "Manager".into(),
            parent: Some("Employee".into()),
            members: vec![
                Member::Attr(AttrDecl {
                    name: "bonus".into(),
                    ty: TypeTag::Int,
                    default: Some(Value::Int(0)),
                }),
                Member::Ctor(CtorDecl {
                    params: vec![Param {
                        name: "b".into(),
                        ty: TypeTag::Int,
                    }],
                    assignments: vec![("bonus".into(), Expr::Name("b".into()))],
                }),
            ],
        };
        assert_eq!(
            canonicalize(&s),
            "CREATE CLASS Manager EXTENDS Employee { bonus: INT = 0; CONSTRUCTOR(b: INT) { bonus := b; } }"
        );
        let empty = Statement::CreateClass {
            name: "Thing".into(),
            parent: None,
            members: vec![],
        };
        assert_eq!(canonicalize(&empty), "CREATE CLASS Thing { }");
    }

    #[test]
    fn select_and_alter_rendering() {
        let s = Statement::Select {
            projection: Projection::Columns(vec!["name".into()]),
            from: "Employee".into(),
            predicate: Some(Expr::Binary(
                BinOp::Gt,
                Box::new(Expr::Name("salary".into())),
                Box::new(lit(5)),
            )),
        };
        assert_eq!(canonicalize(&s), "SELECT name FROM Employee WHERE salary > 5");
        let a = Statement::AlterAddAttribute {
            class: "Employee".into(),
            attr: AttrDecl {
                name: "email".into(),
                ty: TypeTag::Str,
                default: Some(Value::Str(String::new())),
            },
        };
        assert_eq!(canonicalize(&a), "ALTER CLASS Employee ADD email: STRING = \"\";");
    }
}
