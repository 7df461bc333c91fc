//! Naive object-graph interpreter used as the differential-testing oracle.
//!
//! The oracle executes the same statement language as the engine but
//! stores each object as one flat attribute map tagged with its class and
//! roles — no relations, no vertical partitioning — so it cannot share
//! the engine's storage bugs. Extents are computed by filtering every
//! object, inbound references by scanning every attribute map, and the
//! schema rules are re-derived here from scratch. Only the error *kinds*
//! and the check ordering mirror the engine; everything else is written
//! for obviousness, not speed.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{
    AttrDecl, BinOp, CtorDecl, Expr, Member, MethodDecl, ProgressArgs, Projection, Statement,
    UnOp,
};
use crate::error::{Error, Result};
use crate::executor::{QueryResult, StatementResult};
use crate::value::{Oid, TypeTag, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct OClass {
    pub parent: Option<String>,
    pub attrs: Vec<AttrDecl>,
    pub methods: Vec<MethodDecl>,
    pub ctor: Option<CtorDecl>,
    pub ordinal: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ORole {
    pub base: String,
    pub attrs: Vec<AttrDecl>,
    pub methods: Vec<MethodDecl>,
    pub ctor: Option<CtorDecl>,
    pub ordinal: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OObject {
    pub mdc: String,
    pub roles: BTreeSet<String>,
    /// The whole effective state, one flat map.
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Oracle {
    pub classes: BTreeMap<String, OClass>,
    pub roles: BTreeMap<String, ORole>,
    pub objects: BTreeMap<u64, OObject>,
    pub next_oid: u64,
    ordinal: u64,
}

/// Statically inferred expression type, oracle-local.
#[derive(Debug, Clone, PartialEq)]
enum OTy {
    Int,
    Float,
    Str,
    Bool,
    RefKnown(String),
    RefThis,
    RefNull,
}

impl Oracle {
    pub fn new() -> Oracle {
        Oracle {
            next_oid: 1,
            ..Oracle::default()
        }
    }

    // ---- schema helpers --------------------------------------------------

    fn exists(&self, name: &str) -> bool {
        self.classes.contains_key(name) || self.roles.contains_key(name)
    }

    /// Root-first inheritance chain of a class.
    pub fn chain(&self, class: &str) -> Result<Vec<String>> {
        let mut down = Vec::new();
        let mut cur = class;
        loop {
            let def = self
                .classes
                .get(cur)
                .ok_or_else(|| Error::UnknownClass(cur.to_string()))?;
            down.push(cur.to_string());
            match &def.parent {
                Some(p) => cur = p,
                None => break,
            }
        }
        down.reverse();
        Ok(down)
    }

    pub fn anchor(&self, name: &str) -> Result<String> {
        let mut cur = name.to_string();
        loop {
            if self.classes.contains_key(&cur) {
                return Ok(cur);
            }
            match self.roles.get(&cur) {
                Some(r) => cur = r.base.clone(),
                None => return Err(Error::UnknownType(cur)),
            }
        }
    }

    /// Entries whose attributes an interface exposes, most basic first.
    pub fn closure(&self, name: &str) -> Result<Vec<String>> {
        if self.classes.contains_key(name) {
            return self.chain(name);
        }
        match self.roles.get(name) {
            Some(r) => {
                let mut owners = self.closure(&r.base)?;
                owners.push(name.to_string());
                Ok(owners)
            }
            None => Err(Error::UnknownType(name.to_string())),
        }
    }

    pub fn local_attrs(&self, name: &str) -> &[AttrDecl] {
        self.classes
            .get(name)
            .map(|c| c.attrs.as_slice())
            .or_else(|| self.roles.get(name).map(|r| r.attrs.as_slice()))
            .unwrap_or(&[])
    }

    pub fn local_methods(&self, name: &str) -> &[MethodDecl] {
        self.classes
            .get(name)
            .map(|c| c.methods.as_slice())
            .or_else(|| self.roles.get(name).map(|r| r.methods.as_slice()))
            .unwrap_or(&[])
    }

    pub fn visible_attrs(&self, name: &str) -> Result<Vec<(String, AttrDecl)>> {
        let mut out = Vec::new();
        for owner in self.closure(name)? {
            for a in self.local_attrs(&owner) {
                out.push((owner.clone(), a.clone()));
            }
        }
        Ok(out)
    }

    pub fn object(&self, oid: Oid) -> Result<&OObject> {
        self.objects.get(&oid.0).ok_or(Error::UnknownOid(oid.0))
    }

    /// Interface of a live object: chain attributes plus role attributes.
    pub fn object_attr_decls(&self, obj: &OObject) -> Result<Vec<AttrDecl>> {
        let mut out = Vec::new();
        for owner in self.chain(&obj.mdc)? {
            out.extend(self.local_attrs(&owner).iter().cloned());
        }
        for role in &obj.roles {
            out.extend(self.local_attrs(role).iter().cloned());
        }
        Ok(out)
    }

    // ---- statement entry ---------------------------------------------------

    pub fn apply(&mut self, stmt: &Statement) -> Result<StatementResult> {
        // Mirror the engine's statement-level atomicity with the same
        // brute-force tool: clone and restore.
        let backup = self.clone();
        let outcome = self.apply_inner(stmt);
        if outcome.is_err() {
            *self = backup;
        }
        outcome
    }

    fn apply_inner(&mut self, stmt: &Statement) -> Result<StatementResult> {
        match stmt {
            Statement::CreateClass {
                name,
                parent,
                members,
            } => self.create_class(name, parent.as_deref(), members),
            Statement::CreateRole {
                name,
                base,
                members,
            } => self.create_role(name, base, members),
            Statement::AlterAddAttribute { class, attr } => self.alter_add_attr(class, attr),
            Statement::AlterAddMethod { class, method } => self.alter_add_method(class, method),
            Statement::AlterReplaceMethod { class, method } => {
                self.alter_replace_method(class, method)
            }
            Statement::New { oid, class, inits } => self.new_object(*oid, class, inits),
            Statement::Progress { oid, target, args } => self.progress(*oid, target, args),
            Statement::Set { oid, attr, expr } => self.set_attr(*oid, attr, expr),
            Statement::Call { oid, method, args } => self.call(*oid, method, args),
            Statement::Select {
                projection,
                from,
                predicate,
            } => self.select(projection, from, predicate.as_ref()),
            Statement::Destroy { oid } => self.destroy(*oid),
        }
    }

    // ---- DDL ---------------------------------------------------------------

    fn create_class(
        &mut self,
        name: &str,
        parent: Option<&str>,
        members: &[Member],
    ) -> Result<StatementResult> {
        if self.exists(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if let Some(p) = parent {
            if !self.classes.contains_key(p) {
                return Err(Error::UnknownClass(p.to_string()));
            }
        }
        let (attrs, methods, ctor) = split_members(members)?;
        self.classes.insert(
            name.to_string(),
            OClass {
                parent: parent.map(str::to_string),
                attrs,
                methods,
                ctor,
                ordinal: self.ordinal,
            },
        );
        self.ordinal += 1;
        self.validate_entry(name)?;
        Ok(StatementResult::Defined)
    }

    fn create_role(&mut self, name: &str, base: &str, members: &[Member]) -> Result<StatementResult> {
        if self.exists(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if !self.exists(base) {
            return Err(Error::UnknownType(base.to_string()));
        }
        let (attrs, methods, ctor) = split_members(members)?;
        self.roles.insert(
            name.to_string(),
            ORole {
                base: base.to_string(),
                attrs,
                methods,
                ctor,
                ordinal: self.ordinal,
            },
        );
        self.ordinal += 1;
        self.validate_entry(name)?;
        Ok(StatementResult::Defined)
    }

    /// Entry validation in the same order as the engine: local structure,
    /// closure-wide conflicts (attributes then methods, declaration
    /// order), referenced types and defaults, then member bodies.
    fn validate_entry(&self, name: &str) -> Result<()> {
        let mut seen: Vec<String> = Vec::new();
        let attr_names: Vec<String> = self.local_attrs(name).iter().map(|a| a.name.clone()).collect();
        let method_names: Vec<String> =
            self.local_methods(name).iter().map(|m| m.name.clone()).collect();
        for member in attr_names.iter().chain(&method_names) {
            if member == "oid" {
                return Err(Error::NameConflict("`oid` is reserved".to_string()));
            }
            if seen.contains(member) {
                return Err(Error::NameConflict(format!(
                    "member `{member}` declared twice"
                )));
            }
            seen.push(member.clone());
        }

        for attr in &attr_names {
            self.conflict_scan(name, attr, None)?;
        }
        for m in self.local_methods(name) {
            self.conflict_scan(name, &m.name, Some(m))?;
        }

        for a in self.local_attrs(name) {
            self.check_attr_decl(a)?;
        }
        let methods: Vec<MethodDecl> = self.local_methods(name).to_vec();
        for m in &methods {
            self.check_method_body(name, m)?;
        }
        let ctor = self
            .classes
            .get(name)
            .and_then(|c| c.ctor.clone())
            .or_else(|| self.roles.get(name).and_then(|r| r.ctor.clone()));
        if let Some(ctor) = ctor {
            self.check_ctor_body(name, &ctor)?;
        }
        Ok(())
    }

    /// A member introduced on `owner` must be fresh across every entry
    /// that can share an object with `owner`; chain classes may repeat a
    /// method name only as an exact-signature override.
    fn conflict_scan(&self, owner: &str, member: &str, method: Option<&MethodDecl>) -> Result<()> {
        let owner_anchor = self.anchor(owner)?;
        let owner_is_class = self.classes.contains_key(owner);
        let mut others: Vec<&String> = self.classes.keys().chain(self.roles.keys()).collect();
        others.sort();
        for other in others {
            if other == owner {
                continue;
            }
            let other_anchor = self.anchor(other)?;
            let comparable = self.chain(&owner_anchor)?.contains(&other_anchor)
                || self.chain(&other_anchor)?.contains(&owner_anchor);
            if !comparable {
                continue;
            }
            if let Some(existing) = self.local_methods(other).iter().find(|m| m.name == member) {
                let override_ok = owner_is_class && self.classes.contains_key(other);
                match (method, override_ok) {
                    (Some(m), true) => {
                        if !signatures_equal(existing, m) {
                            return Err(Error::SignatureMismatch(format!(
                                "override of `{other}.{member}` changes the signature"
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::NameConflict(format!(
                            "`{member}` collides with `{other}.{member}`"
                        )));
                    }
                }
            }
            if self.local_attrs(other).iter().any(|a| a.name == member) {
                return Err(Error::NameConflict(format!(
                    "`{member}` collides with `{other}.{member}`"
                )));
            }
        }
        Ok(())
    }

    fn check_ref_target(&self, tag: &TypeTag) -> Result<()> {
        if let TypeTag::Ref(c) = tag {
            if !self.classes.contains_key(c) {
                return Err(Error::UnknownClass(c.clone()));
            }
        }
        Ok(())
    }

    fn check_attr_decl(&self, a: &AttrDecl) -> Result<()> {
        self.check_ref_target(&a.ty)?;
        if let Some(d) = &a.default {
            let ok = match (&a.ty, d) {
                (TypeTag::Ref(_), Value::Ref(None)) => true,
                (TypeTag::Ref(_), _) => false,
                (tag, v) => v.matches_kind(tag),
            };
            if !ok {
                return Err(Error::TypeMismatch(format!(
                    "default for `{}` is not {}",
                    a.name, a.ty
                )));
            }
        }
        Ok(())
    }

    fn check_params(&self, owner: &str, params: &[crate::ast::Param]) -> Result<()> {
        let visible = self.visible_attrs(owner)?;
        let mut seen: Vec<&str> = Vec::new();
        for p in params {
            if p.name == "oid" {
                return Err(Error::NameConflict("`oid` is reserved".to_string()));
            }
            if seen.contains(&p.name.as_str()) {
                return Err(Error::NameConflict(format!(
                    "parameter `{}` declared twice",
                    p.name
                )));
            }
            if visible.iter().any(|(_, a)| a.name == p.name) {
                return Err(Error::NameConflict(format!(
                    "parameter `{}` shadows an attribute",
                    p.name
                )));
            }
            self.check_ref_target(&p.ty)?;
            seen.push(&p.name);
        }
        Ok(())
    }

    fn member_scope(&self, owner: &str, params: &[crate::ast::Param]) -> Result<OScope> {
        Ok(OScope {
            params: params
                .iter()
                .map(|p| (p.name.clone(), tag_ty(&p.ty)))
                .collect(),
            attrs: self
                .visible_attrs(owner)?
                .into_iter()
                .map(|(_, a)| (a.name, a.ty))
                .collect(),
            this_anchor: Some(self.anchor(owner)?),
            allow_oids: false,
        })
    }

    fn check_method_body(&self, owner: &str, m: &MethodDecl) -> Result<()> {
        self.check_params(owner, &m.params)?;
        self.check_ref_target(&m.return_ty)?;
        let scope = self.member_scope(owner, &m.params)?;
        let ty = self.check(&m.body, &scope)?;
        if !self.compatible(&m.return_ty, &ty, scope.this_anchor.as_deref()) {
            return Err(Error::TypeMismatch(format!(
                "body of `{}` does not produce {}",
                m.name, m.return_ty
            )));
        }
        Ok(())
    }

    fn check_ctor_body(&self, owner: &str, ctor: &CtorDecl) -> Result<()> {
        self.check_params(owner, &ctor.params)?;
        let scope = self.member_scope(owner, &ctor.params)?;
        let is_class = self.classes.contains_key(owner);
        for (target, expr) in &ctor.assignments {
            let decl = if is_class {
                self.visible_attrs(owner)?
                    .into_iter()
                    .map(|(_, a)| a)
                    .find(|a| a.name == *target)
            } else {
                self.local_attrs(owner).iter().find(|a| a.name == *target).cloned()
            };
            let Some(decl) = decl else {
                return Err(Error::NameError(format!(
                    "constructor cannot assign `{target}`"
                )));
            };
            let ty = self.check(expr, &scope)?;
            if !self.compatible(&decl.ty, &ty, scope.this_anchor.as_deref()) {
                return Err(Error::TypeMismatch(format!(
                    "constructor assigns wrong type to `{target}`"
                )));
            }
        }
        Ok(())
    }

    fn alter_add_attr(&mut self, class: &str, attr: &AttrDecl) -> Result<StatementResult> {
        if !self.classes.contains_key(class) {
            return Err(Error::UnknownClass(class.to_string()));
        }
        let Some(default) = attr.default.clone() else {
            return Err(Error::MissingDefault(attr.name.clone()));
        };
        if attr.name == "oid" {
            return Err(Error::NameConflict("`oid` is reserved".to_string()));
        }
        if self.local_attrs(class).iter().any(|a| a.name == attr.name)
            || self.local_methods(class).iter().any(|m| m.name == attr.name)
        {
            return Err(Error::NameConflict(format!(
                "`{class}` already declares `{}`",
                attr.name
            )));
        }
        self.conflict_scan(class, &attr.name, None)?;
        self.check_attr_decl(attr)?;
        self.classes.get_mut(class).unwrap().attrs.push(attr.clone());
        // Backfill: every object whose chain includes the class.
        let holders: Vec<u64> = self
            .objects
            .iter()
            .filter(|(_, o)| {
                self.chain(&o.mdc)
                    .map(|c| c.iter().any(|e| e == class))
                    .unwrap_or(false)
            })
            .map(|(&oid, _)| oid)
            .collect();
        for oid in holders {
            self.objects
                .get_mut(&oid)
                .unwrap()
                .attrs
                .insert(attr.name.clone(), default.clone());
        }
        Ok(StatementResult::Defined)
    }

    fn alter_add_method(&mut self, class: &str, method: &MethodDecl) -> Result<StatementResult> {
        if !self.classes.contains_key(class) {
            return Err(Error::UnknownClass(class.to_string()));
        }
        if method.name == "oid" {
            return Err(Error::NameConflict("`oid` is reserved".to_string()));
        }
        if self.local_methods(class).iter().any(|m| m.name == method.name) {
            return Err(Error::DuplicateName(method.name.clone()));
        }
        if self.local_attrs(class).iter().any(|a| a.name == method.name) {
            return Err(Error::NameConflict(format!(
                "`{class}` already declares `{}`",
                method.name
            )));
        }
        self.conflict_scan(class, &method.name, Some(method))?;
        self.classes
            .get_mut(class)
            .unwrap()
            .methods
            .push(method.clone());
        self.check_method_body(class, method)?;
        Ok(StatementResult::Defined)
    }

    fn alter_replace_method(&mut self, class: &str, method: &MethodDecl) -> Result<StatementResult> {
        if !self.classes.contains_key(class) {
            return Err(Error::UnknownClass(class.to_string()));
        }
        let Some(existing) = self
            .local_methods(class)
            .iter()
            .find(|m| m.name == method.name)
        else {
            return Err(Error::UnknownMethod(method.name.clone()));
        };
        if !signatures_equal(existing, method) {
            return Err(Error::SignatureMismatch(format!(
                "replacement of `{}` changes the signature",
                method.name
            )));
        }
        let slot = self
            .classes
            .get_mut(class)
            .unwrap()
            .methods
            .iter_mut()
            .find(|m| m.name == method.name)
            .unwrap();
        *slot = method.clone();
        self.check_method_body(class, method)?;
        Ok(StatementResult::Defined)
    }

    // ---- DML ---------------------------------------------------------------

    fn new_object(
        &mut self,
        explicit: Option<Oid>,
        class: &str,
        inits: &[(String, Expr)],
    ) -> Result<StatementResult> {
        if !self.classes.contains_key(class) {
            return Err(Error::UnknownClass(class.to_string()));
        }
        let oid = match explicit {
            Some(o) => {
                if o.0 < self.next_oid {
                    return Err(Error::OidConflict(o.0));
                }
                self.next_oid = o.0 + 1;
                o.0
            }
            None => {
                let o = self.next_oid;
                self.next_oid += 1;
                o
            }
        };

        let visible = self.visible_attrs(class)?;
        let scope = OScope {
            params: Vec::new(),
            attrs: Vec::new(),
            this_anchor: None,
            allow_oids: true,
        };
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
            let ty = self.check(expr, &scope)?;
            if !self.compatible(&decl.ty, &ty, None) {
                return Err(Error::TypeMismatch(format!(
                    "initializer `{name}` has the wrong type"
                )));
            }
        }
        for (_, decl) in &visible {
            if decl.default.is_none() && !seen.contains(&decl.name.as_str()) {
                return Err(Error::MissingInitializer(decl.name.clone()));
            }
        }

        let mut attrs = BTreeMap::new();
        for (_, decl) in &visible {
            if let Some(d) = &decl.default {
                attrs.insert(decl.name.clone(), d.clone());
            }
        }
        for (name, expr) in inits {
            let v = self.eval(expr, &OCtx::plain(None))?;
            attrs.insert(name.clone(), v);
        }
        self.objects.insert(
            oid,
            OObject {
                mdc: class.to_string(),
                roles: BTreeSet::new(),
                attrs,
            },
        );
        Ok(StatementResult::Created(Oid(oid)))
    }

    fn object_scope(&self, oid: Oid) -> Result<OScope> {
        let obj = self.object(oid)?;
        Ok(OScope {
            params: Vec::new(),
            attrs: self
                .object_attr_decls(obj)?
                .into_iter()
                .map(|a| (a.name, a.ty))
                .collect(),
            this_anchor: Some(obj.mdc.clone()),
            allow_oids: true,
        })
    }

    fn progress(&mut self, oid: Oid, target: &str, args: &ProgressArgs) -> Result<StatementResult> {
        let obj = self.object(oid)?.clone();
        let target_is_class = self.classes.contains_key(target);
        let (locals, ctor): (Vec<AttrDecl>, Option<CtorDecl>) = if target_is_class {
            let c = &self.classes[target];
            if c.parent.as_deref() != Some(obj.mdc.as_str()) {
                return Err(Error::NotDirectSubclass(format!(
                    "`{target}` does not directly extend `{}`",
                    obj.mdc
                )));
            }
            (c.attrs.clone(), c.ctor.clone())
        } else if let Some(r) = self.roles.get(target) {
            if obj.roles.contains(target) {
                return Err(Error::AlreadyInRole {
                    oid: oid.0,
                    role: target.to_string(),
                });
            }
            let satisfied = if self.classes.contains_key(&r.base) {
                self.chain(&obj.mdc)?.contains(&r.base)
            } else {
                obj.roles.contains(&r.base)
            };
            if !satisfied {
                return Err(Error::RoleBaseNotSatisfied(format!(
                    "{oid} lacks `{}`",
                    r.base
                )));
            }
            (r.attrs.clone(), r.ctor.clone())
        } else {
            return Err(Error::UnknownType(target.to_string()));
        };

        let mut new_values: BTreeMap<String, Value> = BTreeMap::new();
        match (&ctor, args) {
            (Some(_), ProgressArgs::Named(_)) => {
                return Err(Error::ArityMismatch(format!(
                    "`{target}` takes positional constructor arguments"
                )));
            }
            (Some(ctor), ProgressArgs::Positional(exprs)) => {
                if exprs.len() != ctor.params.len() {
                    return Err(Error::ArityMismatch(format!(
                        "`{target}` constructor takes {} arguments",
                        ctor.params.len()
                    )));
                }
                let scope = self.object_scope(oid)?;
                for (expr, param) in exprs.iter().zip(&ctor.params) {
                    let ty = self.check(expr, &scope)?;
                    if !self.compatible(&param.ty, &ty, scope.this_anchor.as_deref()) {
                        return Err(Error::TypeMismatch(format!(
                            "bad argument for `{}`",
                            param.name
                        )));
                    }
                }
                let mut values = Vec::new();
                for expr in exprs {
                    values.push(self.eval(expr, &OCtx::plain(Some(oid)))?);
                }

                // Pending overlay: defaults first, assignments in order.
                let local_names: Vec<String> = locals.iter().map(|a| a.name.clone()).collect();
                let mut pending: BTreeMap<String, Value> = locals
                    .iter()
                    .filter_map(|a| a.default.clone().map(|d| (a.name.clone(), d)))
                    .collect();
                let params: Vec<(String, Value)> = ctor
                    .params
                    .iter()
                    .map(|p| p.name.clone())
                    .zip(values)
                    .collect();
                for (attr, expr) in &ctor.assignments {
                    let ctx = OCtx {
                        this: Some(oid),
                        params: &params,
                        pending: Some((&local_names, &pending)),
                    };
                    let v = self.eval(expr, &ctx)?;
                    pending.insert(attr.clone(), v);
                }
                for a in &locals {
                    if !pending.contains_key(&a.name) {
                        return Err(Error::MissingInitializer(a.name.clone()));
                    }
                }
                new_values = pending;
            }
            (None, ProgressArgs::Positional(exprs)) if !exprs.is_empty() => {
                return Err(Error::ArityMismatch(format!(
                    "`{target}` has no constructor"
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
                    let Some(decl) = locals.iter().find(|a| a.name == *name) else {
                        return Err(Error::NameError(format!(
                            "`{target}` has no local attribute `{name}`"
                        )));
                    };
                    let scope = self.object_scope(oid)?;
                    let ty = self.check(expr, &scope)?;
                    if !self.compatible(&decl.ty, &ty, scope.this_anchor.as_deref()) {
                        return Err(Error::TypeMismatch(format!(
                            "initializer `{name}` has the wrong type"
                        )));
                    }
                }
                for a in &locals {
                    if a.default.is_none() && !seen.contains(&a.name.as_str()) {
                        return Err(Error::MissingInitializer(a.name.clone()));
                    }
                }
                for a in &locals {
                    if let Some(d) = &a.default {
                        new_values.insert(a.name.clone(), d.clone());
                    }
                }
                for (name, expr) in inits {
                    let v = self.eval(expr, &OCtx::plain(Some(oid)))?;
                    new_values.insert(name.clone(), v);
                }
            }
        }

        let obj = self.objects.get_mut(&oid.0).unwrap();
        obj.attrs.extend(new_values);
        if target_is_class {
            obj.mdc = target.to_string();
        } else {
            obj.roles.insert(target.to_string());
        }
        Ok(StatementResult::Progressed(oid))
    }

    fn set_attr(&mut self, oid: Oid, attr: &str, expr: &Expr) -> Result<StatementResult> {
        let obj = self.object(oid)?.clone();
        let decl = self
            .object_attr_decls(&obj)?
            .into_iter()
            .find(|a| a.name == attr)
            .ok_or_else(|| Error::NameError(format!("no attribute `{attr}` on {oid}")))?;
        let scope = self.object_scope(oid)?;
        let ty = self.check(expr, &scope)?;
        if !self.compatible(&decl.ty, &ty, scope.this_anchor.as_deref()) {
            return Err(Error::TypeMismatch(format!(
                "cannot store that type into `{attr}`"
            )));
        }
        let v = self.eval(expr, &OCtx::plain(Some(oid)))?;
        self.objects
            .get_mut(&oid.0)
            .unwrap()
            .attrs
            .insert(attr.to_string(), v.clone());
        Ok(StatementResult::Updated(v))
    }

    fn call(&self, oid: Oid, method: &str, args: &[Expr]) -> Result<StatementResult> {
        let obj = self.object(oid)?;
        let mut decl: Option<MethodDecl> = None;
        for owner in self.chain(&obj.mdc)? {
            if let Some(m) = self.local_methods(&owner).iter().find(|m| m.name == method) {
                decl = Some(m.clone());
            }
        }
        if decl.is_none() {
            for role in &obj.roles {
                if let Some(m) = self.local_methods(role).iter().find(|m| m.name == method) {
                    decl = Some(m.clone());
                    break;
                }
            }
        }
        let Some(decl) = decl else {
            return Err(Error::UnknownMethod(method.to_string()));
        };
        if args.len() != decl.params.len() {
            return Err(Error::ArityMismatch(format!(
                "`{method}` takes {} arguments",
                decl.params.len()
            )));
        }
        let scope = self.object_scope(oid)?;
        for (expr, param) in args.iter().zip(&decl.params) {
            let ty = self.check(expr, &scope)?;
            if !self.compatible(&param.ty, &ty, scope.this_anchor.as_deref()) {
                return Err(Error::TypeMismatch(format!(
                    "bad argument for `{}`",
                    param.name
                )));
            }
        }
        let mut params = Vec::new();
        for (expr, param) in args.iter().zip(&decl.params) {
            params.push((param.name.clone(), self.eval(expr, &OCtx::plain(Some(oid)))?));
        }
        let ctx = OCtx {
            this: Some(oid),
            params: &params,
            pending: None,
        };
        Ok(StatementResult::Value(self.eval(&decl.body, &ctx)?))
    }

    /// Extent by brute force: every object that belongs to the class (via
    /// its chain) or holds the role.
    pub fn extent(&self, name: &str) -> Result<Vec<Oid>> {
        if self.classes.contains_key(name) {
            let mut out = Vec::new();
            for (&oid, obj) in &self.objects {
                if self.chain(&obj.mdc)?.iter().any(|c| c == name) {
                    out.push(Oid(oid));
                }
            }
            Ok(out)
        } else if self.roles.contains_key(name) {
            Ok(self
                .objects
                .iter()
                .filter(|(_, o)| o.roles.contains(name))
                .map(|(&oid, _)| Oid(oid))
                .collect())
        } else {
            Err(Error::UnknownType(name.to_string()))
        }
    }

    fn select(
        &self,
        projection: &Projection,
        from: &str,
        predicate: Option<&Expr>,
    ) -> Result<StatementResult> {
        if !self.exists(from) {
            return Err(Error::UnknownType(from.to_string()));
        }
        let visible = self.visible_attrs(from)?;
        let mut names: Vec<String> = Vec::new();
        match projection {
            Projection::Star => {
                names.extend(visible.iter().map(|(_, a)| a.name.clone()));
            }
            Projection::Columns(cols) => {
                for c in cols {
                    if c == "oid" {
                        continue;
                    }
                    if !visible.iter().any(|(_, a)| a.name == *c) {
                        return Err(Error::NameError(format!(
                            "`{from}` has no attribute `{c}`"
                        )));
                    }
                    names.push(c.clone());
                }
            }
        }
        if let Some(pred) = predicate {
            let scope = OScope {
                params: Vec::new(),
                attrs: visible.iter().map(|(_, a)| (a.name.clone(), a.ty.clone())).collect(),
                this_anchor: Some(self.anchor(from)?),
                allow_oids: true,
            };
            let ty = self.check(pred, &scope)?;
            if ty != OTy::Bool {
                return Err(Error::TypeMismatch("WHERE must be BOOL".to_string()));
            }
        }
        let mut rows = Vec::new();
        for oid in self.extent(from)? {
            if let Some(pred) = predicate {
                match self.eval(pred, &OCtx::plain(Some(oid)))? {
                    Value::Bool(true) => {}
                    _ => continue,
                }
            }
            let obj = &self.objects[&oid.0];
            let tuple = names.iter().map(|n| obj.attrs[n].clone()).collect();
            rows.push((oid, tuple));
        }
        let mut columns = vec!["oid".to_string()];
        columns.extend(names);
        Ok(StatementResult::Query(QueryResult { columns, rows }))
    }

    fn destroy(&mut self, oid: Oid) -> Result<StatementResult> {
        self.object(oid)?;
        let referenced = self.objects.values().any(|o| {
            o.attrs
                .values()
                .any(|v| *v == Value::Ref(Some(oid)))
        });
        if referenced {
            return Err(Error::ReferencedObject {
                oid: oid.0,
                cells: "referenced".to_string(),
            });
        }
        self.objects.remove(&oid.0);
        Ok(StatementResult::Destroyed)
    }

    // ---- expression checking -------------------------------------------------

    fn compatible(&self, declared: &TypeTag, actual: &OTy, this_anchor: Option<&str>) -> bool {
        match (declared, actual) {
            (TypeTag::Int, OTy::Int)
            | (TypeTag::Float, OTy::Float)
            | (TypeTag::Str, OTy::Str)
            | (TypeTag::Bool, OTy::Bool)
            | (TypeTag::Ref(_), OTy::RefNull) => true,
            (TypeTag::Ref(t), OTy::RefKnown(c)) => self
                .chain(c)
                .map(|ch| ch.contains(t))
                .unwrap_or(false),
            (TypeTag::Ref(t), OTy::RefThis) => this_anchor
                .and_then(|a| self.chain(a).ok())
                .map(|ch| ch.contains(t))
                .unwrap_or(false),
            _ => false,
        }
    }

    fn check(&self, expr: &Expr, scope: &OScope) -> Result<OTy> {
        match expr {
            Expr::Literal(v) => Ok(match v {
                Value::Int(_) => OTy::Int,
                Value::Float(_) => OTy::Float,
                Value::Str(_) => OTy::Str,
                Value::Bool(_) => OTy::Bool,
                Value::Ref(None) => OTy::RefNull,
                Value::Ref(Some(o)) => return self.check_oid_use(*o, scope),
            }),
            Expr::Name(n) => {
                if let Some((_, t)) = scope.params.iter().find(|(p, _)| p == n) {
                    return Ok(t.clone());
                }
                if let Some((_, tag)) = scope.attrs.iter().find(|(a, _)| a == n) {
                    return Ok(tag_ty(tag));
                }
                Err(Error::NameError(format!("unknown name `{n}`")))
            }
            Expr::This => {
                if scope.this_anchor.is_some() {
                    Ok(OTy::RefThis)
                } else {
                    Err(Error::NameError("`this` is not available".to_string()))
                }
            }
            Expr::OidLit(o) => self.check_oid_use(*o, scope),
            Expr::Navigate(base, attr) => match self.check(base, scope)? {
                OTy::RefKnown(c) => {
                    for owner in self.chain(&c)? {
                        if let Some(a) = self.local_attrs(&owner).iter().find(|a| a.name == *attr)
                        {
                            return Ok(tag_ty(&a.ty));
                        }
                    }
                    Err(Error::NameError(format!(
                        "class `{c}` has no attribute `{attr}`"
                    )))
                }
                OTy::RefThis => scope
                    .attrs
                    .iter()
                    .find(|(a, _)| a == attr)
                    .map(|(_, tag)| tag_ty(tag))
                    .ok_or_else(|| Error::NameError(format!("no attribute `{attr}`"))),
                OTy::RefNull => Err(Error::TypeMismatch("cannot navigate NULL".to_string())),
                other => Err(Error::TypeMismatch(format!(
                    "cannot navigate {other:?}"
                ))),
            },
            Expr::Unary(UnOp::Neg, e) => match self.check(e, scope)? {
                t @ (OTy::Int | OTy::Float) => Ok(t),
                t => Err(Error::TypeMismatch(format!("`-` applied to {t:?}"))),
            },
            Expr::Unary(UnOp::Not, e) => match self.check(e, scope)? {
                OTy::Bool => Ok(OTy::Bool),
                t => Err(Error::TypeMismatch(format!("`NOT` applied to {t:?}"))),
            },
            Expr::Binary(op, l, r) => {
                let lt = self.check(l, scope)?;
                let rt = self.check(r, scope)?;
                self.check_bin(*op, lt, rt)
            }
        }
    }

    fn check_oid_use(&self, oid: Oid, scope: &OScope) -> Result<OTy> {
        if !scope.allow_oids {
            return Err(Error::TypeMismatch(format!(
                "`{oid}` not allowed in a stored body"
            )));
        }
        let obj = self.object(oid)?;
        Ok(OTy::RefKnown(obj.mdc.clone()))
    }

    fn check_bin(&self, op: BinOp, lt: OTy, rt: OTy) -> Result<OTy> {
        use OTy::*;
        let numeric = |a: &OTy| matches!(a, Int | Float);
        let is_ref = |a: &OTy| matches!(a, RefKnown(_) | RefThis | RefNull);
        let err = || Error::TypeMismatch(format!("`{}` on {lt:?} and {rt:?}", op.symbol()));
        match op {
            BinOp::Add if lt == Str && rt == Str => Ok(Str),
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                if numeric(&lt) && numeric(&rt) {
                    Ok(if lt == Int && rt == Int { Int } else { Float })
                } else {
                    Err(err())
                }
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                if numeric(&lt) && numeric(&rt) {
                    Ok(Bool)
                } else {
                    Err(err())
                }
            }
            BinOp::Eq | BinOp::Ne => {
                let ok = (lt == Int && rt == Int)
                    || (lt == Float && rt == Float)
                    || (lt == Str && rt == Str)
                    || (lt == Bool && rt == Bool)
                    || (is_ref(&lt) && is_ref(&rt));
                if ok {
                    Ok(Bool)
                } else {
                    Err(err())
                }
            }
            BinOp::And | BinOp::Or => {
                if lt == Bool && rt == Bool {
                    Ok(Bool)
                } else {
                    Err(err())
                }
            }
        }
    }

    // ---- expression evaluation -------------------------------------------------

    fn read_object_attr(&self, ctx: &OCtx, oid: Oid, attr: &str) -> Result<Value> {
        let is_this = ctx.this == Some(oid);
        if is_this {
            if let Some((_, pending)) = ctx.pending {
                if let Some(v) = pending.get(attr) {
                    return Ok(v.clone());
                }
            }
        }
        let obj = self.object(oid)?;
        if let Some(v) = obj.attrs.get(attr) {
            return Ok(v.clone());
        }
        if is_this {
            if let Some((locals, _)) = ctx.pending {
                if locals.iter().any(|l| l == attr) {
                    return Err(Error::MissingInitializer(attr.to_string()));
                }
            }
        }
        Err(Error::NameError(format!("no attribute `{attr}`")))
    }

    fn eval(&self, expr: &Expr, ctx: &OCtx) -> Result<Value> {
        match expr {
            Expr::Literal(v) => Ok(v.clone()),
            Expr::Name(n) => {
                if let Some((_, v)) = ctx.params.iter().find(|(p, _)| p == n) {
                    return Ok(v.clone());
                }
                let oid = ctx
                    .this
                    .ok_or_else(|| Error::NameError(format!("unknown name `{n}`")))?;
                self.read_object_attr(ctx, oid, n)
            }
            Expr::This => Ok(Value::Ref(Some(ctx.this.expect("checked")))),
            Expr::OidLit(o) => Ok(Value::Ref(Some(*o))),
            Expr::Navigate(base, attr) => match self.eval(base, ctx)? {
                Value::Ref(None) => Err(Error::NullReference(format!(
                    "navigating `.{attr}` on NULL"
                ))),
                Value::Ref(Some(o)) => self.read_object_attr(ctx, o, attr),
                other => Err(Error::TypeMismatch(format!(
                    "cannot navigate {}",
                    other.kind_name()
                ))),
            },
            Expr::Unary(UnOp::Neg, e) => match self.eval(e, ctx)? {
                Value::Int(i) => {
                    let wide = -(i as i128);
                    if wide < i64::MIN as i128 || wide > i64::MAX as i128 {
                        Err(Error::IntOverflow(format!("-({i})")))
                    } else {
                        Ok(Value::Int(wide as i64))
                    }
                }
                Value::Float(x) => Ok(Value::Float(-x)),
                other => Err(Error::TypeMismatch(format!(
                    "`-` on {}",
                    other.kind_name()
                ))),
            },
            Expr::Unary(UnOp::Not, e) => match self.eval(e, ctx)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(Error::TypeMismatch(format!(
                    "`NOT` on {}",
                    other.kind_name()
                ))),
            },
            Expr::Binary(op, l, r) => {
                let lv = self.eval(l, ctx)?;
                let rv = self.eval(r, ctx)?;
                oracle_binary(*op, lv, rv)
            }
        }
    }
}

/// Oracle evaluation context.
struct OCtx<'a> {
    this: Option<Oid>,
    params: &'a [(String, Value)],
    pending: Option<(&'a [String], &'a BTreeMap<String, Value>)>,
}

impl<'a> OCtx<'a> {
    fn plain(this: Option<Oid>) -> OCtx<'a> {
        OCtx {
            this,
            params: &[],
            pending: None,
        }
    }
}

struct OScope {
    params: Vec<(String, OTy)>,
    attrs: Vec<(String, TypeTag)>,
    this_anchor: Option<String>,
    allow_oids: bool,
}

fn tag_ty(tag: &TypeTag) -> OTy {
    match tag {
        TypeTag::Int => OTy::Int,
        TypeTag::Float => OTy::Float,
        TypeTag::Str => OTy::Str,
        TypeTag::Bool => OTy::Bool,
        TypeTag::Ref(c) => OTy::RefKnown(c.clone()),
    }
}

fn split_members(
    members: &[Member],
) -> Result<(Vec<AttrDecl>, Vec<MethodDecl>, Option<CtorDecl>)> {
    let mut attrs = Vec::new();
    let mut methods = Vec::new();
    let mut ctor = None;
    for m in members {
        match m {
            Member::Attr(a) => attrs.push(a.clone()),
            Member::Method(m) => methods.push(m.clone()),
            Member::Ctor(c) => {
                if ctor.is_some() {
                    return Err(Error::DuplicateName("CONSTRUCTOR".to_string()));
                }
                ctor = Some(c.clone());
            }
        }
    }
    Ok((attrs, methods, ctor))
}

fn signatures_equal(a: &MethodDecl, b: &MethodDecl) -> bool {
    a.return_ty == b.return_ty
        && a.params.len() == b.params.len()
        && a.params.iter().zip(&b.params).all(|(x, y)| x.ty == y.ty)
}

/// Binary operator semantics, written against i128/f64 widening instead of
/// the engine's checked-arithmetic style.
fn oracle_binary(op: BinOp, lv: Value, rv: Value) -> Result<Value> {
    use Value::*;
    let bad = || {
        Error::TypeMismatch(format!(
            "`{}` on {} and {}",
            op.symbol(),
            lv.kind_name(),
            rv.kind_name()
        ))
    };
    let as_f = |v: &Value| match v {
        Int(i) => Some(*i as f64),
        Float(x) => Some(*x),
        _ => None,
    };
    match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => match (&lv, &rv) {
            (Int(a), Int(b)) => {
                let (a, b) = (*a as i128, *b as i128);
                let wide = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div | BinOp::Rem => {
                        if b == 0 {
                            return Err(Error::DivideByZero);
                        }
                        if op == BinOp::Div {
                            a / b
                        } else {
                            a % b
                        }
                    }
                    _ => unreachable!(),
                };
                if wide < i64::MIN as i128 || wide > i64::MAX as i128 {
                    Err(Error::IntOverflow(format!("{a} {} {b}", op.symbol())))
                } else {
                    Ok(Int(wide as i64))
                }
            }
            (Str(a), Str(b)) if op == BinOp::Add => Ok(Str(format!("{a}{b}"))),
            _ => {
                let (Some(a), Some(b)) = (as_f(&lv), as_f(&rv)) else {
                    return Err(bad());
                };
                if matches!(lv, Int(_)) && matches!(rv, Int(_)) {
                    unreachable!("handled above");
                }
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
                if out.is_finite() {
                    Ok(Float(out))
                } else {
                    Err(Error::FloatOverflow(format!("{a} {} {b}", op.symbol())))
                }
            }
        },
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let outcome = match (&lv, &rv) {
                (Int(a), Int(b)) => match op {
                    BinOp::Lt => a < b,
                    BinOp::Le => a <= b,
                    BinOp::Gt => a > b,
                    BinOp::Ge => a >= b,
                    _ => unreachable!(),
                },
                _ => {
                    let (Some(a), Some(b)) = (as_f(&lv), as_f(&rv)) else {
                        return Err(bad());
                    };
                    match op {
                        BinOp::Lt => a < b,
                        BinOp::Le => a <= b,
                        BinOp::Gt => a > b,
                        BinOp::Ge => a >= b,
                        _ => unreachable!(),
                    }
                }
            };
            Ok(Bool(outcome))
        }
        BinOp::Eq | BinOp::Ne => {
            let same = match (&lv, &rv) {
                (Int(a), Int(b)) => a == b,
                (Float(a), Float(b)) => a == b,
                (Str(a), Str(b)) => a == b,
                (Bool(a), Bool(b)) => a == b,
                (Ref(a), Ref(b)) => a == b,
                _ => return Err(bad()),
            };
            Ok(Bool(if op == BinOp::Eq { same } else { !same }))
        }
        BinOp::And | BinOp::Or => match (&lv, &rv) {
            (Bool(a), Bool(b)) => Ok(Bool(if op == BinOp::And {
                *a && *b
            } else {
                *a || *b
            })),
            _ => Err(bad()),
        },
    }
}
