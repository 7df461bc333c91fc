//! Schema state: classes, roles, attributes, methods, constructors.
//!
//! Classes and roles share one namespace. Conflict checking is closed over
//! every pair of catalog entries that can co-occur on a single object: two
//! entries can co-occur exactly when their anchor classes (the entry itself
//! for a class, the class at the end of the base chain for a role) lie on
//! one inheritance chain. Within that closure, member names never collide,
//! with a single exception: a class may re-declare an ancestor's method
//! with the identical signature (an override). Roles never override.

use std::collections::BTreeMap;

use crate::ast::{AttrDecl, CtorDecl, Member, MethodDecl};
use crate::error::{Error, Result};
use crate::evaluator::{self, Scope};
use crate::value::{TypeTag, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDef {
    pub name: String,
    pub parent: Option<String>,
    pub attrs: Vec<AttrDecl>,
    pub methods: Vec<MethodDecl>,
    pub ctor: Option<CtorDecl>,
    pub ordinal: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleDef {
    pub name: String,
    pub base: String,
    pub attrs: Vec<AttrDecl>,
    pub methods: Vec<MethodDecl>,
    pub ctor: Option<CtorDecl>,
    pub ordinal: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeDef {
    Class(ClassDef),
    Role(RoleDef),
}

impl TypeDef {
    pub fn name(&self) -> &str {
        match self {
            TypeDef::Class(c) => &c.name,
            TypeDef::Role(r) => &r.name,
        }
    }

    pub fn attrs(&self) -> &[AttrDecl] {
        match self {
            TypeDef::Class(c) => &c.attrs,
            TypeDef::Role(r) => &r.attrs,
        }
    }

    pub fn methods(&self) -> &[MethodDecl] {
        match self {
            TypeDef::Class(c) => &c.methods,
            TypeDef::Role(r) => &r.methods,
        }
    }

    pub fn ctor(&self) -> Option<&CtorDecl> {
        match self {
            TypeDef::Class(c) => c.ctor.as_ref(),
            TypeDef::Role(r) => r.ctor.as_ref(),
        }
    }

    pub fn ordinal(&self) -> u64 {
        match self {
            TypeDef::Class(c) => c.ordinal,
            TypeDef::Role(r) => r.ordinal,
        }
    }

    pub fn is_class(&self) -> bool {
        matches!(self, TypeDef::Class(_))
    }

    pub fn local_attr(&self, name: &str) -> Option<&AttrDecl> {
        self.attrs().iter().find(|a| a.name == name)
    }

    pub fn local_method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods().iter().find(|m| m.name == name)
    }
}

/// Origin-tagged member reference, as produced by [`Catalog::effective_interface`].
#[derive(Debug, Clone, PartialEq)]
pub enum MemberRef<'a> {
    Attr(&'a AttrDecl),
    Method(&'a MethodDecl),
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    types: BTreeMap<String, TypeDef>,
    next_ordinal: u64,
    /// Canonical DDL statements in execution order; replayed verbatim by
    /// the snapshot CATALOG section.
    ddl_log: Vec<String>,
}

impl Catalog {
    pub fn new() -> Self {
        Catalog::default()
    }

    // ---- queries -------------------------------------------------------

    pub fn get(&self, name: &str) -> Option<&TypeDef> {
        self.types.get(name)
    }

    pub fn entry(&self, name: &str) -> Result<&TypeDef> {
        self.types
            .get(name)
            .ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    pub fn class_def(&self, name: &str) -> Result<&ClassDef> {
        match self.types.get(name) {
            Some(TypeDef::Class(c)) => Ok(c),
            _ => Err(Error::UnknownClass(name.to_string())),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// All entries in creation order.
    pub fn ordered(&self) -> Vec<&TypeDef> {
        let mut v: Vec<&TypeDef> = self.types.values().collect();
        v.sort_by_key(|t| t.ordinal());
        v
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.types.keys().map(String::as_str)
    }

    pub fn ddl_log(&self) -> &[String] {
        &self.ddl_log
    }

    pub fn push_ddl(&mut self, line: String) {
        self.ddl_log.push(line);
    }

    /// Inheritance chain, root first, ending with `class`.
    pub fn chain(&self, class: &str) -> Result<Vec<&str>> {
        let mut rev = Vec::new();
        let mut cur = self.class_def(class)?;
        loop {
            rev.push(cur.name.as_str());
            match &cur.parent {
                Some(p) => {
                    cur = self.class_def(p)?;
                    assert!(rev.len() <= self.types.len(), "inheritance cycle");
                }
                None => break,
            }
        }
        rev.reverse();
        Ok(rev)
    }

    /// The class anchoring `name`: the class itself, or the class at the
    /// end of a role's base chain.
    pub fn anchor(&self, name: &str) -> Result<&str> {
        let mut steps = 0;
        let mut cur = self.entry(name)?;
        loop {
            match cur {
                TypeDef::Class(c) => return Ok(&c.name),
                TypeDef::Role(r) => {
                    cur = self.entry(&r.base)?;
                    steps += 1;
                    assert!(steps <= self.types.len(), "role base cycle");
                }
            }
        }
    }

    /// True when members of both entries can appear on one object: their
    /// anchor classes lie on a single inheritance chain.
    pub fn co_occurrable(&self, a: &str, b: &str) -> Result<bool> {
        let aa = self.anchor(a)?;
        let ab = self.anchor(b)?;
        Ok(self.chain(aa)?.contains(&ab) || self.chain(ab)?.contains(&aa))
    }

    /// Entry names whose attributes are visible from `name`'s interface,
    /// most basic first: the anchor's chain, then base roles, then `name`.
    pub fn closure(&self, name: &str) -> Result<Vec<&str>> {
        match self.entry(name)? {
            TypeDef::Class(_) => self.chain(name),
            TypeDef::Role(r) => {
                let mut owners = self.closure(&r.base)?;
                owners.push(name_of(self.entry(name)?));
                Ok(owners)
            }
        }
    }

    /// Visible attributes of a class or role interface, in closure order,
    /// declaration order within one owner.
    pub fn visible_attrs(&self, name: &str) -> Result<Vec<(&str, &AttrDecl)>> {
        let mut out = Vec::new();
        for owner in self.closure(name)? {
            let def = self.entry(owner)?;
            for a in def.attrs() {
                out.push((name_of(def), a));
            }
        }
        Ok(out)
    }

    pub fn find_visible_attr(&self, name: &str, attr: &str) -> Result<Option<(&str, &AttrDecl)>> {
        Ok(self
            .visible_attrs(name)?
            .into_iter()
            .find(|(_, a)| a.name == attr))
    }

    /// Attribute lookup along a class chain (used to type `ref.attr`
    /// navigation, where only the declared class's interface is known).
    pub fn find_chain_attr(&self, class: &str, attr: &str) -> Result<Option<(&str, &AttrDecl)>> {
        for owner in self.chain(class)? {
            if let Some(a) = self.types[owner].local_attr(attr) {
                return Ok(Some((owner, a)));
            }
        }
        Ok(None)
    }

    /// Most-derived declaration of `method` along the chain of `class`.
    pub fn resolve_chain_method(&self, class: &str, method: &str) -> Result<Option<(&str, &MethodDecl)>> {
        let mut found = None;
        for owner in self.chain(class)? {
            if let Some(m) = self.types[owner].local_method(method) {
                found = Some((owner, m));
            }
        }
        Ok(found)
    }

    /// The collision-free union of chain members (overrides collapsed to
    /// the most-derived body) and all given roles' members.
    pub fn effective_interface(
        &self,
        class: &str,
        roles: &[&str],
    ) -> Result<BTreeMap<String, (String, MemberRef<'_>)>> {
        let mut map = BTreeMap::new();
        for owner in self.chain(class)? {
            let def = &self.types[owner];
            for a in def.attrs() {
                map.insert(a.name.clone(), (owner.to_string(), MemberRef::Attr(a)));
            }
            for m in def.methods() {
                // Later chain entries are more derived; overrides replace.
                map.insert(m.name.clone(), (owner.to_string(), MemberRef::Method(m)));
            }
        }
        for role in roles {
            let def = self.entry(role)?;
            if def.is_class() {
                return Err(Error::UnknownType(role.to_string()));
            }
            for a in def.attrs() {
                map.insert(a.name.clone(), (role.to_string(), MemberRef::Attr(a)));
            }
            for m in def.methods() {
                map.insert(m.name.clone(), (role.to_string(), MemberRef::Method(m)));
            }
        }
        Ok(map)
    }

    // ---- mutations -----------------------------------------------------

    /// Register a class. On error the catalog may be left with the
    /// half-validated entry; the executor restores the pre-statement state.
    pub fn define_class(
        &mut self,
        name: &str,
        parent: Option<&str>,
        members: Vec<Member>,
    ) -> Result<()> {
        if self.types.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if let Some(p) = parent {
            self.class_def(p)?;
        }
        let (attrs, methods, ctor) = split_members(members)?;
        let def = ClassDef {
            name: name.to_string(),
            parent: parent.map(str::to_string),
            attrs,
            methods,
            ctor,
            ordinal: self.next_ordinal,
        };
        self.next_ordinal += 1;
        self.types.insert(name.to_string(), TypeDef::Class(def));
        self.validate_entry(name)
    }

    /// Register a role for a class or another role.
    pub fn define_role(&mut self, name: &str, base: &str, members: Vec<Member>) -> Result<()> {
        if self.types.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        self.entry(base)?;
        let (attrs, methods, ctor) = split_members(members)?;
        let def = RoleDef {
            name: name.to_string(),
            base: base.to_string(),
            attrs,
            methods,
            ctor,
            ordinal: self.next_ordinal,
        };
        self.next_ordinal += 1;
        self.types.insert(name.to_string(), TypeDef::Role(def));
        self.validate_entry(name)
    }

    /// Add an attribute to an existing class. The caller backfills rows.
    pub fn add_attribute(&mut self, class: &str, attr: AttrDecl) -> Result<()> {
        self.class_def(class)?;
        if attr.default.is_none() {
            return Err(Error::MissingDefault(attr.name.clone()));
        }
        check_reserved(&attr.name)?;
        self.check_fresh_member_name(class, &attr.name)?;
        self.check_attr_types(class, &attr)?;
        let TypeDef::Class(def) = self.types.get_mut(class).unwrap() else {
            unreachable!()
        };
        def.attrs.push(attr);
        Ok(())
    }

    /// Add a method to an existing class. Re-declaring an ancestor's (or,
    /// symmetrically, a descendant's) method name is an override and must
    /// repeat the signature exactly; everything else in the closure is a
    /// conflict.
    pub fn add_method(&mut self, class: &str, method: MethodDecl) -> Result<()> {
        self.class_def(class)?;
        check_reserved(&method.name)?;
        if self.types[class].local_method(&method.name).is_some() {
            return Err(Error::DuplicateName(method.name.clone()));
        }
        if self.types[class].local_attr(&method.name).is_some() {
            return Err(Error::NameConflict(format!(
                "`{class}` already declares member `{}`",
                method.name
            )));
        }
        self.check_member_conflicts(class, "method", &method.name, Some(&method))?;
        let TypeDef::Class(def) = self.types.get_mut(class).unwrap() else {
            unreachable!()
        };
        def.methods.push(method);
        let TypeDef::Class(def) = &self.types[class] else {
            unreachable!()
        };
        let method = def.methods.last().unwrap();
        self.check_method_decl(class, method)
    }

    /// Replace the body of a locally declared method; the signature must
    /// be identical and no stored data changes.
    pub fn replace_method(&mut self, class: &str, method: MethodDecl) -> Result<()> {
        self.class_def(class)?;
        let Some(existing) = self.types[class].local_method(&method.name) else {
            return Err(Error::UnknownMethod(method.name.clone()));
        };
        if !same_signature(existing, &method) {
            return Err(Error::SignatureMismatch(format!(
                "method `{}` signature differs from the declared one",
                method.name
            )));
        }
        let name = method.name.clone();
        let TypeDef::Class(def) = self.types.get_mut(class).unwrap() else {
            unreachable!()
        };
        let slot = def.methods.iter_mut().find(|m| m.name == name).unwrap();
        *slot = method;
        let TypeDef::Class(def) = &self.types[class] else {
            unreachable!()
        };
        let method = def.methods.iter().find(|m| m.name == name).unwrap();
        self.check_method_decl(class, method)
    }

    // ---- validation ----------------------------------------------------

    /// Full validation of one (freshly inserted) entry: local structure,
    /// referenced types, closure-wide name conflicts, and member bodies.
    fn validate_entry(&self, name: &str) -> Result<()> {
        let def = &self.types[name];

        // Local structure: reserved and duplicated member names.
        let mut seen: Vec<&str> = Vec::new();
        for (member_name, _) in local_members(def) {
            check_reserved(member_name)?;
            if seen.contains(&member_name) {
                return Err(Error::NameConflict(format!(
                    "member `{member_name}` declared twice in `{name}`"
                )));
            }
            seen.push(member_name);
        }

        // Closure-wide conflicts, members in declaration order.
        for a in def.attrs() {
            self.check_member_conflicts(name, "attribute", &a.name, None)?;
        }
        for m in def.methods() {
            self.check_member_conflicts(name, "method", &m.name, Some(m))?;
        }

        // Types referenced by attributes and defaults.
        for a in def.attrs() {
            self.check_attr_types(name, a)?;
        }

        // Method bodies and the constructor.
        for m in def.methods() {
            self.check_method_decl(name, m)?;
        }
        if let Some(ctor) = def.ctor() {
            self.check_ctor_decl(name, ctor)?;
        }
        Ok(())
    }

    fn check_ref_target(&self, tag: &TypeTag) -> Result<()> {
        if let TypeTag::Ref(target) = tag {
            self.class_def(target)?;
        }
        Ok(())
    }

    fn check_attr_types(&self, owner: &str, attr: &AttrDecl) -> Result<()> {
        self.check_ref_target(&attr.ty)?;
        if let Some(d) = &attr.default {
            let ok = match (&attr.ty, d) {
                (TypeTag::Ref(_), Value::Ref(None)) => true,
                (TypeTag::Ref(_), _) => false,
                (tag, v) => v.matches_kind(tag),
            };
            if !ok {
                return Err(Error::TypeMismatch(format!(
                    "default for `{owner}.{}` is not of type {}",
                    attr.name, attr.ty
                )));
            }
        }
        Ok(())
    }

    /// A member name being introduced on `owner` must not collide with any
    /// member of a co-occurrable entry. When `method` is given and the
    /// other entry is a chain class declaring a method of the same name,
    /// the pair is an override and the signatures must match exactly.
    fn check_member_conflicts(
        &self,
        owner: &str,
        what: &str,
        member: &str,
        method: Option<&MethodDecl>,
    ) -> Result<()> {
        let owner_is_class = self.types[owner].is_class();
        for other in self.types.values() {
            if other.name() == owner || !self.co_occurrable(owner, other.name())? {
                continue;
            }
            if let Some(existing) = other.local_method(member) {
                let chain_pair = owner_is_class && other.is_class();
                match (method, chain_pair) {
                    (Some(m), true) => {
                        if !same_signature(existing, m) {
                            return Err(Error::SignatureMismatch(format!(
                                "override of `{}.{member}` changes the signature",
                                other.name()
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::NameConflict(format!(
                            "{what} `{member}` on `{owner}` collides with method `{}.{member}`",
                            other.name()
                        )));
                    }
                }
            }
            if other.local_attr(member).is_some() {
                return Err(Error::NameConflict(format!(
                    "{what} `{member}` on `{owner}` collides with attribute `{}.{member}`",
                    other.name()
                )));
            }
        }
        Ok(())
    }

    fn check_fresh_member_name(&self, owner: &str, member: &str) -> Result<()> {
        if self.types[owner].local_attr(member).is_some()
            || self.types[owner].local_method(member).is_some()
        {
            return Err(Error::NameConflict(format!(
                "`{owner}` already declares member `{member}`"
            )));
        }
        self.check_member_conflicts(owner, "attribute", member, None)
    }

    fn check_params(&self, owner: &str, params: &[crate::ast::Param]) -> Result<()> {
        let visible = self.visible_attrs(owner)?;
        let mut seen: Vec<&str> = Vec::new();
        for p in params {
            check_reserved(&p.name)?;
            if seen.contains(&p.name.as_str()) {
                return Err(Error::NameConflict(format!(
                    "parameter `{}` declared twice",
                    p.name
                )));
            }
            if visible.iter().any(|(_, a)| a.name == p.name) {
                return Err(Error::NameConflict(format!(
                    "parameter `{}` shadows an attribute visible from `{owner}`",
                    p.name
                )));
            }
            self.check_ref_target(&p.ty)?;
            seen.push(&p.name);
        }
        Ok(())
    }

    fn check_method_decl(&self, owner: &str, m: &MethodDecl) -> Result<()> {
        self.check_params(owner, &m.params)?;
        self.check_ref_target(&m.return_ty)?;
        let scope = Scope::for_member(self, owner, &m.params)?;
        let ty = evaluator::check_expr(&m.body, &scope)?;
        if !evaluator::assignment_compatible(self, &m.return_ty, &ty, scope.this_class()) {
            return Err(Error::TypeMismatch(format!(
                "body of `{owner}.{}` has type {ty}, declared {}",
                m.name, m.return_ty
            )));
        }
        Ok(())
    }

    /// Class constructors may assign any chain attribute, transforming
    /// the object for its new class; role constructors only local ones,
    /// because a role cannot re-implement the class it applies to.
    fn check_ctor_decl(&self, owner: &str, ctor: &CtorDecl) -> Result<()> {
        self.check_params(owner, &ctor.params)?;
        let def = &self.types[owner];
        let scope = Scope::for_member(self, owner, &ctor.params)?;
        for (target, expr) in &ctor.assignments {
            let target_attr = if def.is_class() {
                self.find_visible_attr(owner, target)?.map(|(_, a)| a)
            } else {
                def.local_attr(target)
            };
            let Some(attr) = target_attr else {
                return Err(Error::NameError(format!(
                    "constructor of `{owner}` cannot assign `{target}`"
                )));
            };
            let ty = evaluator::check_expr(expr, &scope)?;
            if !evaluator::assignment_compatible(self, &attr.ty, &ty, scope.this_class()) {
                return Err(Error::TypeMismatch(format!(
                    "constructor assigns {ty} to `{target}: {}`",
                    attr.ty
                )));
            }
        }
        Ok(())
    }
}

fn name_of(def: &TypeDef) -> &str {
    def.name()
}

fn check_reserved(name: &str) -> Result<()> {
    if name == "oid" {
        return Err(Error::NameConflict(
            "`oid` is reserved for object identity".to_string(),
        ));
    }
    Ok(())
}

fn split_members(
    members: Vec<Member>,
) -> Result<(Vec<AttrDecl>, Vec<MethodDecl>, Option<CtorDecl>)> {
    let mut attrs = Vec::new();
    let mut methods = Vec::new();
    let mut ctor = None;
    for m in members {
        match m {
            Member::Attr(a) => attrs.push(a),
            Member::Method(m) => methods.push(m),
            Member::Ctor(c) => {
                if ctor.is_some() {
                    return Err(Error::DuplicateName("CONSTRUCTOR".to_string()));
                }
                ctor = Some(c);
            }
        }
    }
    Ok((attrs, methods, ctor))
}

fn local_members(def: &TypeDef) -> impl Iterator<Item = (&str, &'static str)> {
    let attrs = def.attrs().iter().map(|a| (a.name.as_str(), "attribute"));
    let methods = def.methods().iter().map(|m| (m.name.as_str(), "method"));
    attrs.chain(methods)
}

/// Signatures match when parameter types and return type are identical;
/// parameter names are local and do not participate.
pub fn same_signature(a: &MethodDecl, b: &MethodDecl) -> bool {
    a.return_ty == b.return_ty
        && a.params.len() == b.params.len()
        && a.params.iter().zip(&b.params).all(|(x, y)| x.ty == y.ty)
}
