//! Statement execution: the single-writer engine tying catalog, store,
//! evaluator, and journal together.
//!
//! Every mutating statement is atomic: the engine snapshots catalog and
//! store, applies the statement, and restores the snapshot on any error.
//! Successful mutations are appended to the journal in canonical resolved
//! form — every argument already evaluated to a literal — before the
//! result is returned, so replay never re-evaluates caller expressions.

use std::collections::BTreeMap;
use std::path::Path;

use crate::ast::{Expr, Statement, ProgressArgs, Projection};
use crate::canon;
use crate::catalog::{Catalog, TypeDef};
use crate::error::{Error, Result};
use crate::evaluator::{self, Env, Scope};
use crate::persistence::{self, Journal};
use crate::relstore::Store;
use crate::value::{Oid, Value};

/// Outcome of one executed statement.
#[derive(Debug, Clone, PartialEq)]
pub enum StatementResult {
    /// CREATE or ALTER completed.
    Defined,
    /// NEW: the freshly allocated object.
    Created(Oid),
    /// PROGRESS completed for this object.
    Progressed(Oid),
    /// SET stored this value.
    Updated(Value),
    /// CALL returned this value.
    Value(Value),
    /// SELECT result.
    Query(QueryResult),
    /// DESTROY completed.
    Destroyed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// Column names; the first is always `oid`.
    pub columns: Vec<String>,
    pub rows: Vec<(Oid, Vec<Value>)>,
}

#[derive(Debug)]
pub struct Engine {
    catalog: Catalog,
    store: Store,
    journal: Option<Journal>,
    poisoned: bool,
}

impl Engine {
    /// Engine without durability; used by tests and the differential runner.
    pub fn in_memory() -> Engine {
        Engine {
            catalog: Catalog::new(),
            store: Store::new(),
            journal: None,
            poisoned: false,
        }
    }

    /// Open (or create) an on-disk database directory.
    pub fn open(dir: &Path) -> Result<Engine> {
        persistence::open_db(dir)
    }

    pub(crate) fn from_parts(catalog: Catalog, store: Store) -> Engine {
        Engine {
            catalog,
            store,
            journal: None,
            poisoned: false,
        }
    }

    pub(crate) fn attach_journal(&mut self, journal: Journal) {
        self.journal = Some(journal);
    }

    pub(crate) fn into_parts(self) -> (Catalog, Store) {
        (self.catalog, self.store)
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Write a fresh snapshot and truncate the journal.
    pub fn checkpoint(&mut self) -> Result<()> {
        let Some(journal) = &mut self.journal else {
            return Err(Error::Io("not a durable database".to_string()));
        };
        persistence::write_snapshot(journal.dir(), &self.catalog, &self.store)?;
        journal.truncate()
    }

    /// The canonical snapshot document for the current state.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        persistence::render_snapshot(&self.catalog, &self.store)
    }

    /// Storage invariant check; empty result means consistent.
    pub fn audit(&self) -> Vec<String> {
        self.store.audit(&self.catalog)
    }

    /// Full attribute view of one object across all its relations.
    pub fn assemble_view(&self, oid: Oid) -> Result<BTreeMap<String, Value>> {
        let header = self.store.header(oid)?.clone();
        let mut view = BTreeMap::new();
        let mut owners: Vec<&str> = self.catalog.chain(&header.mdc)?;
        owners.extend(header.roles.iter().map(String::as_str));
        for owner in owners {
            let rel = self.store.relation(owner)?;
            let row = self.store.row(owner, oid).expect("partition invariant");
            for (col, v) in rel.columns.iter().zip(row) {
                let prev = view.insert(col.clone(), v.clone());
                debug_assert!(prev.is_none(), "interface disjointness");
            }
        }
        Ok(view)
    }

    pub fn extent(&self, name: &str) -> Result<Vec<Oid>> {
        self.catalog.entry(name)?;
        self.store.extent(name)
    }

    pub fn find_inbound_refs(&self, target: Oid) -> Vec<(String, Oid, String)> {
        self.store.find_inbound_refs(target)
    }

    /// Execute one statement with statement-level atomicity.
    pub fn execute(&mut self, stmt: &Statement) -> Result<StatementResult> {
        if !stmt.is_mutating() {
            return match stmt {
                Statement::Call { oid, method, args } => self.call_method(*oid, method, args),
                Statement::Select {
                    projection,
                    from,
                    predicate,
                } => self.select(projection, from, predicate.as_ref()),
                _ => unreachable!("non-mutating statements"),
            };
        }
        if self.poisoned {
            return Err(Error::Io(
                "a journal write failed; reopen the database".to_string(),
            ));
        }
        let backup = (self.catalog.clone(), self.store.clone());
        match self.apply_mutating(stmt) {
            Ok((result, line)) => {
                if let Some(journal) = &mut self.journal {
                    if let Err(e) = journal.append(&line) {
                        self.poisoned = true;
                        (self.catalog, self.store) = backup;
                        return Err(e);
                    }
                }
                Ok(result)
            }
            Err(e) => {
                (self.catalog, self.store) = backup;
                Err(e)
            }
        }
    }

    /// Apply a mutating statement; returns the result and the canonical
    /// resolved journal line. Partial mutations on error are fine — the
    /// caller restores the backup.
    fn apply_mutating(&mut self, stmt: &Statement) -> Result<(StatementResult, String)> {
        match stmt {
            Statement::CreateClass {
                name,
                parent,
                members,
            } => {
                self.catalog
                    .define_class(name, parent.as_deref(), members.clone())?;
                let columns = self.catalog.entry(name)?.attrs().iter().map(|a| a.name.clone()).collect();
                self.store.create_relation(name, false, columns);
                let line = canon::canonicalize(stmt);
                self.catalog.push_ddl(line.clone());
                Ok((StatementResult::Defined, line))
            }
            Statement::CreateRole {
                name,
                base,
                members,
            } => {
                self.catalog.define_role(name, base, members.clone())?;
                let columns = self.catalog.entry(name)?.attrs().iter().map(|a| a.name.clone()).collect();
                self.store.create_relation(name, true, columns);
                let line = canon::canonicalize(stmt);
                self.catalog.push_ddl(line.clone());
                Ok((StatementResult::Defined, line))
            }
            Statement::AlterAddAttribute { class, attr } => {
                self.catalog.add_attribute(class, attr.clone())?;
                let default = attr.default.clone().expect("checked: default present");
                self.store.add_column(class, &attr.name, default);
                let line = canon::canonicalize(stmt);
                self.catalog.push_ddl(line.clone());
                Ok((StatementResult::Defined, line))
            }
            Statement::AlterAddMethod { class, method } => {
                self.catalog.add_method(class, method.clone())?;
                let line = canon::canonicalize(stmt);
                self.catalog.push_ddl(line.clone());
                Ok((StatementResult::Defined, line))
            }
            Statement::AlterReplaceMethod { class, method } => {
                self.catalog.replace_method(class, method.clone())?;
                let line = canon::canonicalize(stmt);
                self.catalog.push_ddl(line.clone());
                Ok((StatementResult::Defined, line))
            }
            Statement::New { oid, class, inits } => self.new_object(*oid, class, inits),
            Statement::Progress { oid, target, args } => self.progress(*oid, target, args),
            Statement::Set { oid, attr, expr } => self.set_attribute(*oid, attr, expr),
            Statement::Destroy { oid } => {
                self.destroy(*oid)?;
                let line = canon::canonicalize(stmt);
                Ok((StatementResult::Destroyed, line))
            }
            Statement::Call { .. } | Statement::Select { .. } => unreachable!("mutating only"),
        }
    }

    fn new_object(
        &mut self,
        explicit: Option<Oid>,
        class: &str,
        inits: &[(String, Expr)],
    ) -> Result<(StatementResult, String)> {
        self.catalog.class_def(class)?;
        let oid = match explicit {
            Some(o) => {
                self.store.claim_oid(o)?;
                o
            }
            None => self.store.alloc_oid(),
        };

        // Static phase: initializer names and types, then coverage.
        let visible = self.catalog.visible_attrs(class)?;
        let mut seen: Vec<&str> = Vec::new();
        for (name, expr) in inits {
            if seen.contains(&name.as_str()) {
                return Err(Error::NameError(format!("duplicate initializer `{name}`")));
            }
            seen.push(name);
            let Some((_, decl)) = visible.iter().find(|(_, a)| a.name == *name) else {
                return Err(Error::NameError(format!(
                    "class `{class}` has no attribute `{name}`"
                )));
            };
            let scope = Scope::for_new(&self.catalog, &self.store);
            let ty = evaluator::check_expr(expr, &scope)?;
            if !evaluator::assignment_compatible(&self.catalog, &decl.ty, &ty, None) {
                return Err(Error::TypeMismatch(format!(
                    "initializer `{name}` has type {ty}, attribute is {}",
                    decl.ty
                )));
            }
        }
        for (_, decl) in &visible {
            if decl.default.is_none() && !seen.contains(&decl.name.as_str()) {
                return Err(Error::MissingInitializer(decl.name.clone()));
            }
        }

        // Dynamic phase: evaluate in written order, then insert rows
        // root-first.
        let mut values: BTreeMap<&str, Value> = BTreeMap::new();
        let mut resolved: Vec<(String, Value)> = Vec::new();
        for (name, expr) in inits {
            let env = Env::plain(&self.catalog, &self.store, None);
            let v = evaluator::eval(expr, &env)?;
            values.insert(name, v.clone());
            resolved.push((name.clone(), v));
        }
        for owner in self.catalog.chain(class)? {
            let def = self.catalog.entry(owner)?;
            let row = def
                .attrs()
                .iter()
                .map(|a| {
                    values
                        .get(a.name.as_str())
                        .cloned()
                        .unwrap_or_else(|| a.default.clone().expect("covered"))
                })
                .collect();
            let owner = owner.to_string();
            self.store.insert_row(&owner, oid, row)?;
        }
        self.store.insert_object(oid, class);

        let line = canon::canonicalize(&Statement::New {
            oid: Some(oid),
            class: class.to_string(),
            inits: resolved
                .into_iter()
                .map(|(n, v)| (n, value_to_expr(v)))
                .collect(),
        });
        Ok((StatementResult::Created(oid), line))
    }

    fn progress(
        &mut self,
        oid: Oid,
        target: &str,
        args: &ProgressArgs,
    ) -> Result<(StatementResult, String)> {
        let header = self.store.header(oid)?.clone();
        let def = self
            .catalog
            .get(target)
            .ok_or_else(|| Error::UnknownType(target.to_string()))?
            .clone();
        match &def {
            TypeDef::Class(c) => {
                if c.parent.as_deref() != Some(header.mdc.as_str()) {
                    return Err(Error::NotDirectSubclass(format!(
                        "`{target}` is not a direct subclass of `{}`",
                        header.mdc
                    )));
                }
            }
            TypeDef::Role(r) => {
                if header.roles.contains(target) {
                    return Err(Error::AlreadyInRole {
                        oid: oid.0,
                        role: target.to_string(),
                    });
                }
                let satisfied = match self.catalog.get(&r.base) {
                    Some(TypeDef::Class(_)) => {
                        self.catalog.chain(&header.mdc)?.contains(&r.base.as_str())
                    }
                    Some(TypeDef::Role(_)) => header.roles.contains(&r.base),
                    None => false,
                };
                if !satisfied {
                    return Err(Error::RoleBaseNotSatisfied(format!(
                        "{oid} lacks base `{}` required by role `{target}`",
                        r.base
                    )));
                }
            }
        }

        let journal_args;
        let row;
        let mut inherited = Vec::new();
        match (def.ctor(), args) {
            (Some(_), ProgressArgs::Named(_)) => {
                return Err(Error::ArityMismatch(format!(
                    "`{target}` has a constructor; arguments are positional"
                )));
            }
            (Some(ctor), ProgressArgs::Positional(exprs)) => {
                if exprs.len() != ctor.params.len() {
                    return Err(Error::ArityMismatch(format!(
                        "`{target}` constructor takes {} arguments, got {}",
                        ctor.params.len(),
                        exprs.len()
                    )));
                }
                let scope = Scope::for_object(&self.catalog, &self.store, oid)?;
                for (expr, param) in exprs.iter().zip(&ctor.params) {
                    let ty = evaluator::check_expr(expr, &scope)?;
                    if !evaluator::assignment_compatible(
                        &self.catalog,
                        &param.ty,
                        &ty,
                        scope.this_class(),
                    ) {
                        return Err(Error::TypeMismatch(format!(
                            "argument for `{}` has type {ty}, expected {}",
                            param.name, param.ty
                        )));
                    }
                }
                let mut arg_values = Vec::new();
                for expr in exprs {
                    let env = Env::plain(&self.catalog, &self.store, Some(oid));
                    arg_values.push(evaluator::eval(expr, &env)?);
                }
                journal_args = ProgressArgs::Positional(
                    arg_values.iter().cloned().map(value_to_expr).collect(),
                );
                let outcome = evaluator::run_constructor(
                    &self.catalog,
                    &self.store,
                    oid,
                    target,
                    ctor,
                    arg_values,
                )?;
                row = outcome.row;
                inherited = outcome.inherited;
            }
            (None, ProgressArgs::Positional(exprs)) if !exprs.is_empty() => {
                return Err(Error::ArityMismatch(format!(
                    "`{target}` has no constructor; use named initializers"
                )));
            }
            (None, args) => {
                let inits: &[(String, Expr)] = match args {
                    ProgressArgs::Named(inits) => inits,
                    ProgressArgs::Positional(_) => &[],
                };
                let mut seen: Vec<&str> = Vec::new();
                for (name, expr) in inits {
                    if seen.contains(&name.as_str()) {
                        return Err(Error::NameError(format!(
                            "duplicate initializer `{name}`"
                        )));
                    }
                    seen.push(name);
                    let Some(decl) = def.local_attr(name) else {
                        return Err(Error::NameError(format!(
                            "`{target}` has no local attribute `{name}`"
                        )));
                    };
                    let scope = Scope::for_object(&self.catalog, &self.store, oid)?;
                    let ty = evaluator::check_expr(expr, &scope)?;
                    if !evaluator::assignment_compatible(
                        &self.catalog,
                        &decl.ty,
                        &ty,
                        scope.this_class(),
                    ) {
                        return Err(Error::TypeMismatch(format!(
                            "initializer `{name}` has type {ty}, attribute is {}",
                            decl.ty
                        )));
                    }
                }
                for a in def.attrs() {
                    if a.default.is_none() && !seen.contains(&a.name.as_str()) {
                        return Err(Error::MissingInitializer(a.name.clone()));
                    }
                }
                let mut values: BTreeMap<&str, Value> = BTreeMap::new();
                let mut resolved = Vec::new();
                for (name, expr) in inits {
                    let env = Env::plain(&self.catalog, &self.store, Some(oid));
                    let v = evaluator::eval(expr, &env)?;
                    values.insert(name, v.clone());
                    resolved.push((name.clone(), value_to_expr(v)));
                }
                journal_args = ProgressArgs::Named(resolved);
                row = def
                    .attrs()
                    .iter()
                    .map(|a| {
                        values
                            .get(a.name.as_str())
                            .cloned()
                            .unwrap_or_else(|| a.default.clone().expect("covered"))
                    })
                    .collect();
            }
        }

        self.store.insert_row(target, oid, row)?;
        for (attr, v) in inherited {
            let (owner, _) = self
                .catalog
                .find_chain_attr(&header.mdc, &attr)?
                .expect("checked at class definition");
            let owner = owner.to_string();
            self.store.set_cell(&owner, oid, &attr, v);
        }
        match &def {
            TypeDef::Class(_) => self.store.set_mdc(oid, target),
            TypeDef::Role(_) => self.store.add_role_to(oid, target),
        }

        let line = canon::canonicalize(&Statement::Progress {
            oid,
            target: target.to_string(),
            args: journal_args,
        });
        Ok((StatementResult::Progressed(oid), line))
    }

    fn set_attribute(
        &mut self,
        oid: Oid,
        attr: &str,
        expr: &Expr,
    ) -> Result<(StatementResult, String)> {
        let header = self.store.header(oid)?.clone();
        let mut owners: Vec<&str> = self.catalog.chain(&header.mdc)?;
        owners.extend(header.roles.iter().map(String::as_str));
        let owner = owners
            .into_iter()
            .find(|o| self.catalog.get(o).unwrap().local_attr(attr).is_some())
            .ok_or_else(|| Error::NameError(format!("no attribute `{attr}` on {oid}")))?
            .to_string();
        let decl = self.catalog.get(&owner).unwrap().local_attr(attr).unwrap().clone();

        let scope = Scope::for_object(&self.catalog, &self.store, oid)?;
        let ty = evaluator::check_expr(expr, &scope)?;
        if !evaluator::assignment_compatible(&self.catalog, &decl.ty, &ty, scope.this_class()) {
            return Err(Error::TypeMismatch(format!(
                "cannot store {ty} into `{attr}: {}`",
                decl.ty
            )));
        }
        let env = Env::plain(&self.catalog, &self.store, Some(oid));
        let value = evaluator::eval(expr, &env)?;
        self.store.set_cell(&owner, oid, attr, value.clone());

        let line = canon::canonicalize(&Statement::Set {
            oid,
            attr: attr.to_string(),
            expr: value_to_expr(value.clone()),
        });
        Ok((StatementResult::Updated(value), line))
    }

    fn call_method(&self, oid: Oid, method: &str, args: &[Expr]) -> Result<StatementResult> {
        let header = self.store.header(oid)?.clone();
        let resolved = match self.catalog.resolve_chain_method(&header.mdc, method)? {
            Some((owner, m)) => Some((owner.to_string(), m.clone())),
            None => header
                .roles
                .iter()
                .find_map(|r| {
                    self.catalog
                        .get(r)
                        .and_then(|d| d.local_method(method))
                        .map(|m| (r.clone(), m.clone()))
                }),
        };
        let Some((_, decl)) = resolved else {
            return Err(Error::UnknownMethod(method.to_string()));
        };

        if args.len() != decl.params.len() {
            return Err(Error::ArityMismatch(format!(
                "`{method}` takes {} arguments, got {}",
                decl.params.len(),
                args.len()
            )));
        }
        let scope = Scope::for_object(&self.catalog, &self.store, oid)?;
        for (expr, param) in args.iter().zip(&decl.params) {
            let ty = evaluator::check_expr(expr, &scope)?;
            if !evaluator::assignment_compatible(&self.catalog, &param.ty, &ty, scope.this_class())
            {
                return Err(Error::TypeMismatch(format!(
                    "argument for `{}` has type {ty}, expected {}",
                    param.name, param.ty
                )));
            }
        }
        let mut params = Vec::new();
        for (expr, param) in args.iter().zip(&decl.params) {
            let env = Env::plain(&self.catalog, &self.store, Some(oid));
            params.push((param.name.clone(), evaluator::eval(expr, &env)?));
        }
        let env = Env {
            catalog: &self.catalog,
            store: &self.store,
            this_oid: Some(oid),
            params: &params,
            pending: None,
        };
        Ok(StatementResult::Value(evaluator::eval(&decl.body, &env)?))
    }

    fn select(
        &self,
        projection: &Projection,
        from: &str,
        predicate: Option<&Expr>,
    ) -> Result<StatementResult> {
        self.catalog.entry(from)?;
        let visible = self.catalog.visible_attrs(from)?;

        // Resolve projected columns to (name, owning relation). An explicit
        // `oid` column is dropped: object identity is always the first
        // output column.
        let mut columns: Vec<(String, String)> = Vec::new();
        match projection {
            Projection::Star => {
                for (owner, a) in &visible {
                    columns.push((a.name.clone(), owner.to_string()));
                }
            }
            Projection::Columns(names) => {
                for name in names {
                    if name == "oid" {
                        continue;
                    }
                    let Some((owner, a)) = visible.iter().find(|(_, a)| a.name == *name) else {
                        return Err(Error::NameError(format!(
                            "`{from}` has no attribute `{name}`"
                        )));
                    };
                    columns.push((a.name.clone(), owner.to_string()));
                }
            }
        }

        if let Some(pred) = predicate {
            let scope = Scope::for_entry(&self.catalog, &self.store, from)?;
            let ty = evaluator::check_expr(pred, &scope)?;
            if ty != evaluator::StaticType::Bool {
                return Err(Error::TypeMismatch(format!(
                    "WHERE predicate must be BOOL, got {ty}"
                )));
            }
        }

        let mut rows = Vec::new();
        for oid in self.store.extent(from)? {
            if let Some(pred) = predicate {
                let env = Env::plain(&self.catalog, &self.store, Some(oid));
                match evaluator::eval(pred, &env)? {
                    Value::Bool(true) => {}
                    Value::Bool(false) => continue,
                    _ => unreachable!("checked BOOL"),
                }
            }
            let mut tuple = Vec::new();
            for (name, owner) in &columns {
                let v = self
                    .store
                    .cell(owner, oid, name)
                    .expect("partition invariant")
                    .clone();
                tuple.push(v);
            }
            rows.push((oid, tuple));
        }

        let mut names = vec!["oid".to_string()];
        names.extend(columns.into_iter().map(|(n, _)| n));
        Ok(StatementResult::Query(QueryResult {
            columns: names,
            rows,
        }))
    }

    fn destroy(&mut self, oid: Oid) -> Result<()> {
        self.store.header(oid)?;
        let refs = self.store.find_inbound_refs(oid);
        if !refs.is_empty() {
            let cells = refs
                .iter()
                .map(|(owner, holder, col)| format!("{owner} {holder}.{col}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::ReferencedObject {
                oid: oid.0,
                cells,
            });
        }
        self.store.remove_object(oid);
        Ok(())
    }
}

/// Render an evaluated value back into expression form for the journal.
fn value_to_expr(v: Value) -> Expr {
    match v {
        Value::Ref(Some(o)) => Expr::OidLit(o),
        other => Expr::Literal(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use crate::parser;

    fn exec(engine: &mut Engine, src: &str) -> Result<StatementResult> {
        engine.execute(&parser::parse_statement(src)?)
    }

    fn ok(engine: &mut Engine, src: &str) -> StatementResult {
        exec(engine, src).unwrap_or_else(|e| panic!("`{src}` failed: {e:?}"))
    }

    fn fails(engine: &mut Engine, src: &str) -> ErrorKind {
        exec(engine, src)
            .map(|r| panic!("`{src}` unexpectedly succeeded: {r:?}"))
            .unwrap_err()
            .kind()
    }

    fn class_scenario(engine: &mut Engine) {
        for stmt in [
            r#"CREATE CLASS Employee {
                 name: STRING;
                 salary: INT = 0;
                 METHOD title(): STRING = "Employee";
               }"#,
            r#"CREATE CLASS Manager EXTENDS Employee {
                 bonus: INT;
                 METHOD title(): STRING = "Manager";
                 CONSTRUCTOR(b: INT) { bonus := b; }
               }"#,
            r#"CREATE CLASS Library { issuedTo: REF<Employee> = NULL; }"#,
        ] {
            ok(engine, stmt);
        }
    }

    #[test]
    fn progression_preserves_oid_and_references() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        assert_eq!(
            ok(&mut e, r#"NEW Employee(name = "Ann")"#),
            StatementResult::Created(Oid(1))
        );
        ok(&mut e, "NEW Library(issuedTo = #1)");
        assert_eq!(
            ok(&mut e, r#"CALL #1.title()"#),
            StatementResult::Value(Value::Str("Employee".to_string()))
        );

        let refs_before = e.find_inbound_refs(Oid(1));
        ok(&mut e, "PROGRESS #1 TO Manager(10)");

        assert_eq!(e.extent("Employee").unwrap(), vec![Oid(1)]);
        assert_eq!(e.extent("Manager").unwrap(), vec![Oid(1)]);
        assert_eq!(e.find_inbound_refs(Oid(1)), refs_before);
        assert_eq!(
            ok(&mut e, r#"CALL #1.title()"#),
            StatementResult::Value(Value::Str("Manager".to_string()))
        );
        let view = e.assemble_view(Oid(1)).unwrap();
        assert_eq!(view["name"], Value::Str("Ann".to_string()));
        assert_eq!(view["salary"], Value::Int(0));
        assert_eq!(view["bonus"], Value::Int(10));
        assert!(e.audit().is_empty());
    }

    #[test]
    fn progression_requires_direct_subclass() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann")"#);
        ok(&mut e, "PROGRESS #1 TO Manager(1)");
        assert_eq!(
            fails(&mut e, "PROGRESS #1 TO Manager(1)"),
            ErrorKind::NotDirectSubclass
        );
    }

    #[test]
    fn constructor_transforms_inherited_attributes() {
        let mut e = Engine::in_memory();
        ok(
            &mut e,
            "CREATE CLASS Employee { name: STRING; salary: INT = 0; }",
        );
        ok(
            &mut e,
            r#"CREATE CLASS Manager EXTENDS Employee {
                 bonus: INT;
                 CONSTRUCTOR(raise: INT) { bonus := raise; salary := salary + raise; }
               }"#,
        );
        ok(&mut e, r#"NEW Employee(name = "Ann", salary = 7)"#);
        ok(&mut e, "PROGRESS #1 TO Manager(3)");
        let view = e.assemble_view(Oid(1)).unwrap();
        assert_eq!(view["salary"], Value::Int(10));
        assert_eq!(view["bonus"], Value::Int(3));
    }

    fn role_scenario(engine: &mut Engine) {
        for stmt in [
            "CREATE CLASS Employee { name: STRING; salary: INT = 0; }",
            "CREATE ROLE Manager FOR Employee { bonus: INT = 0; }",
            "CREATE ROLE Mentor FOR Employee { mentee: REF<Employee> = NULL; }",
            "CREATE ROLE Top FOR Manager { scope: STRING = \"all\"; }",
        ] {
            ok(engine, stmt);
        }
    }

    #[test]
    fn roles_overlap_and_stack() {
        let mut e = Engine::in_memory();
        role_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann")"#);

        assert_eq!(
            fails(&mut e, "PROGRESS #1 TO Top()"),
            ErrorKind::RoleBaseNotSatisfied
        );
        ok(&mut e, "PROGRESS #1 TO Manager(bonus = 5)");
        ok(&mut e, "PROGRESS #1 TO Mentor()");
        assert_eq!(
            fails(&mut e, "PROGRESS #1 TO Mentor()"),
            ErrorKind::AlreadyInRole
        );
        assert_eq!(e.extent("Manager").unwrap(), vec![Oid(1)]);
        assert_eq!(e.extent("Mentor").unwrap(), vec![Oid(1)]);

        let before = e.assemble_view(Oid(1)).unwrap();
        ok(&mut e, "PROGRESS #1 TO Top()");
        let mut after = e.assemble_view(Oid(1)).unwrap();
        assert_eq!(after.remove("scope"), Some(Value::Str("all".to_string())));
        assert_eq!(after, before);
        assert!(e.audit().is_empty());
    }

    #[test]
    fn set_resolves_attributes_through_roles() {
        let mut e = Engine::in_memory();
        role_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann", salary = 10)"#);
        assert_eq!(
            fails(&mut e, "SET #1.bonus = 1"),
            ErrorKind::NameError,
            "attribute invisible before the role is acquired"
        );
        ok(&mut e, "PROGRESS #1 TO Manager()");
        assert_eq!(
            ok(&mut e, "SET #1.bonus = salary * 2"),
            StatementResult::Updated(Value::Int(20))
        );
    }

    #[test]
    fn select_filters_projects_and_orders() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann", salary = 10)"#);
        ok(&mut e, r#"NEW Employee(name = "Bo", salary = 3)"#);
        ok(&mut e, "PROGRESS #1 TO Manager(2)");

        let StatementResult::Query(q) =
            ok(&mut e, "SELECT name FROM Employee WHERE salary > 5")
        else {
            panic!()
        };
        assert_eq!(q.columns, ["oid", "name"]);
        assert_eq!(
            q.rows,
            vec![(Oid(1), vec![Value::Str("Ann".to_string())])]
        );

        let StatementResult::Query(q) = ok(&mut e, "SELECT * FROM Manager") else {
            panic!()
        };
        assert_eq!(q.columns, ["oid", "name", "salary", "bonus"]);

        assert_eq!(
            fails(&mut e, "SELECT bonus FROM Employee"),
            ErrorKind::NameError
        );
        assert_eq!(
            fails(&mut e, "SELECT name FROM Employee WHERE salary"),
            ErrorKind::TypeMismatch
        );
        assert_eq!(
            fails(&mut e, "SELECT name FROM Employee WHERE 1 / 0 == 1"),
            ErrorKind::DivideByZero
        );
    }

    #[test]
    fn destroy_is_restricted_by_inbound_references() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann")"#);
        ok(&mut e, "NEW Library(issuedTo = #1)");
        assert_eq!(fails(&mut e, "DESTROY #1"), ErrorKind::ReferencedObject);
        ok(&mut e, "SET #2.issuedTo = NULL");
        ok(&mut e, "DESTROY #1");
        assert_eq!(e.extent("Employee").unwrap(), Vec::<Oid>::new());
        // Destroyed ids are never reused.
        assert_eq!(
            ok(&mut e, r#"NEW Employee(name = "Cy")"#),
            StatementResult::Created(Oid(3))
        );
    }

    #[test]
    fn alter_add_attribute_backfills_default() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann")"#);
        assert_eq!(
            fails(&mut e, "ALTER CLASS Employee ADD phone: STRING;"),
            ErrorKind::MissingDefault
        );
        ok(&mut e, r#"ALTER CLASS Employee ADD phone: STRING = "";"#);
        assert_eq!(
            e.assemble_view(Oid(1)).unwrap()["phone"],
            Value::Str(String::new())
        );
        assert!(e.audit().is_empty());
    }

    #[test]
    fn replace_method_changes_behavior_without_data_change() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann")"#);
        let before = e.snapshot_bytes();
        ok(
            &mut e,
            r#"ALTER CLASS Employee REPLACE METHOD title(): STRING = "Staff";"#,
        );
        assert_eq!(
            ok(&mut e, "CALL #1.title()"),
            StatementResult::Value(Value::Str("Staff".to_string()))
        );
        // Only the catalog section of the snapshot changed; data rows did not.
        let after = e.snapshot_bytes();
        let data = |b: &[u8]| {
            let s = String::from_utf8(b.to_vec()).unwrap();
            s[s.find("\nDATA\n").unwrap()..s.find("\nEND ").unwrap()].to_string()
        };
        assert_eq!(data(&before), data(&after));
    }

    #[test]
    fn failed_statements_leave_state_untouched() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        ok(&mut e, r#"NEW Employee(name = "Ann")"#);
        let before = e.snapshot_bytes();
        for bad in [
            "PROGRESS #1 TO Manager(1, 2)",
            "PROGRESS #1 TO Manager(\"x\")",
            "PROGRESS #9 TO Manager(1)",
            "NEW Employee()",
            "NEW Employee(name = \"B\", wage = 1)",
            "SET #1.salary = \"x\"",
            "SET #1.salary = 1 / 0",
            "DESTROY #9",
            "CREATE CLASS Employee { }",
            "CREATE CLASS Broken { x: REF<Nope> = NULL; }",
        ] {
            exec(&mut e, bad).unwrap_err();
            assert_eq!(e.snapshot_bytes(), before, "state changed by `{bad}`");
        }
    }

    #[test]
    fn new_rejects_unknowns_in_order() {
        let mut e = Engine::in_memory();
        class_scenario(&mut e);
        assert_eq!(fails(&mut e, "NEW Ghost()"), ErrorKind::UnknownClass);
        assert_eq!(
            fails(&mut e, r#"NEW Employee(wage = 1)"#),
            ErrorKind::NameError
        );
        assert_eq!(fails(&mut e, "NEW Employee()"), ErrorKind::MissingInitializer);
        assert_eq!(
            fails(&mut e, r#"NEW Library(issuedTo = #7)"#),
            ErrorKind::UnknownOid
        );
        ok(&mut e, r#"NEW #5 = Employee(name = "Ann")"#);
        assert_eq!(
            fails(&mut e, r#"NEW #4 = Employee(name = "Bo")"#),
            ErrorKind::OidConflict
        );
        assert_eq!(
            ok(&mut e, r#"NEW Employee(name = "Cy")"#),
            StatementResult::Created(Oid(6))
        );
    }

    #[test]
    fn call_dispatch_and_arguments() {
        let mut e = Engine::in_memory();
        ok(
            &mut e,
            r#"CREATE CLASS Employee {
                 salary: INT = 10;
                 METHOD pay(extra: INT): INT = salary + extra;
               }"#,
        );
        ok(&mut e, "NEW Employee()");
        assert_eq!(
            ok(&mut e, "CALL #1.pay(5)"),
            StatementResult::Value(Value::Int(15))
        );
        assert_eq!(fails(&mut e, "CALL #1.pay()"), ErrorKind::ArityMismatch);
        assert_eq!(fails(&mut e, "CALL #1.gone()"), ErrorKind::UnknownMethod);
        assert_eq!(fails(&mut e, "CALL #9.pay(1)"), ErrorKind::UnknownOid);
    }

    #[test]
    fn role_methods_reachable_only_without_chain_declaration() {
        let mut e = Engine::in_memory();
        ok(&mut e, "CREATE CLASS Employee { salary: INT = 1; }");
        ok(
            &mut e,
            "CREATE ROLE Manager FOR Employee { METHOD grade(): INT = 9; }",
        );
        ok(&mut e, "NEW Employee()");
        assert_eq!(fails(&mut e, "CALL #1.grade()"), ErrorKind::UnknownMethod);
        ok(&mut e, "PROGRESS #1 TO Manager()");
        assert_eq!(
            ok(&mut e, "CALL #1.grade()"),
            StatementResult::Value(Value::Int(9))
        );
    }

    #[test]
    fn name_conflicts_across_cooccurring_entries() {
        let mut e = Engine::in_memory();
        ok(&mut e, "CREATE CLASS Employee { name: STRING; }");
        assert_eq!(
            fails(&mut e, "CREATE CLASS Manager EXTENDS Employee { name: INT; }"),
            ErrorKind::NameConflict
        );
        assert_eq!(
            fails(&mut e, "CREATE ROLE Mentor FOR Employee { name: INT; }"),
            ErrorKind::NameConflict
        );
        // Sibling classes never co-occur, so the name is free there.
        ok(&mut e, "CREATE CLASS Dept { name: STRING; }");
        // A role anchored at a sibling likewise.
        ok(&mut e, "CREATE ROLE Cost FOR Dept { name2: STRING = \"\"; }");
        assert!(e.audit().is_empty());
    }

    #[test]
    fn override_must_repeat_signature() {
        let mut e = Engine::in_memory();
        ok(
            &mut e,
            "CREATE CLASS Employee { METHOD title(): STRING = \"E\"; }",
        );
        assert_eq!(
            fails(
                &mut e,
                "CREATE CLASS Manager EXTENDS Employee { METHOD title(): INT = 1; }"
            ),
            ErrorKind::SignatureMismatch
        );
        ok(
            &mut e,
            "CREATE CLASS Manager EXTENDS Employee { METHOD title(): STRING = \"M\"; }",
        );
        // Roles never override, even with an identical signature.
        assert_eq!(
            fails(
                &mut e,
                "CREATE ROLE Actor FOR Employee { METHOD title(): STRING = \"A\"; }"
            ),
            ErrorKind::NameConflict
        );
    }
}
