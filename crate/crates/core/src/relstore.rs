//! Vertically partitioned relational storage.
//!
//! Every class and every role owns exactly one relation holding only the
//! attributes declared locally on that entry. A stored object is one row
//! per entry along its class chain plus one row per acquired role, all
//! keyed by the same OID. Promoting an object therefore never rewrites
//! existing rows: it only inserts a row into the target's relation.
//!
//! Object headers record each object's most-derived class and role set;
//! they are derivable from row presence and the audit cross-checks the two.

use std::collections::{BTreeMap, BTreeSet};

use crate::catalog::{Catalog, TypeDef};
use crate::error::{Error, Result};
use crate::value::{Oid, TypeTag, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub owner: String,
    pub is_role: bool,
    /// Locally declared attribute names, declaration order.
    pub columns: Vec<String>,
    pub rows: BTreeMap<Oid, Vec<Value>>,
}

impl Relation {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectHeader {
    /// Most-derived class.
    pub mdc: String,
    pub roles: BTreeSet<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Store {
    relations: BTreeMap<String, Relation>,
    objects: BTreeMap<Oid, ObjectHeader>,
    next_oid: u64,
}

impl Store {
    pub fn new() -> Self {
        Store {
            relations: BTreeMap::new(),
            objects: BTreeMap::new(),
            next_oid: 1,
        }
    }

    // ---- relations -----------------------------------------------------

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        self.relations
            .get(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn create_relation(&mut self, owner: &str, is_role: bool, columns: Vec<String>) {
        let prev = self.relations.insert(
            owner.to_string(),
            Relation {
                owner: owner.to_string(),
                is_role,
                columns,
                rows: BTreeMap::new(),
            },
        );
        assert!(prev.is_none(), "relation `{owner}` already exists");
    }

    /// Widen a relation by one column, backfilling every row with `default`.
    pub fn add_column(&mut self, owner: &str, column: &str, default: Value) {
        let rel = self.relations.get_mut(owner).expect("relation exists");
        assert!(rel.column_index(column).is_none());
        rel.columns.push(column.to_string());
        for row in rel.rows.values_mut() {
            row.push(default.clone());
        }
    }

    // ---- rows ----------------------------------------------------------

    pub fn insert_row(&mut self, owner: &str, oid: Oid, values: Vec<Value>) -> Result<()> {
        let rel = self.relations.get_mut(owner).expect("relation exists");
        assert_eq!(rel.columns.len(), values.len(), "row width for `{owner}`");
        if rel.rows.contains_key(&oid) {
            return Err(Error::DuplicateRow {
                relation: owner.to_string(),
                oid: oid.0,
            });
        }
        rel.rows.insert(oid, values);
        Ok(())
    }

    pub fn row(&self, owner: &str, oid: Oid) -> Option<&[Value]> {
        self.relations
            .get(owner)
            .and_then(|r| r.rows.get(&oid))
            .map(Vec::as_slice)
    }

    pub fn cell(&self, owner: &str, oid: Oid, column: &str) -> Option<&Value> {
        let rel = self.relations.get(owner)?;
        let idx = rel.column_index(column)?;
        rel.rows.get(&oid)?.get(idx)
    }

    pub fn set_cell(&mut self, owner: &str, oid: Oid, column: &str, value: Value) {
        let rel = self.relations.get_mut(owner).expect("relation exists");
        let idx = rel.column_index(column).expect("column exists");
        let row = rel.rows.get_mut(&oid).expect("row exists");
        row[idx] = value;
    }

    // ---- objects -------------------------------------------------------

    pub fn objects(&self) -> &BTreeMap<Oid, ObjectHeader> {
        &self.objects
    }

    pub fn header(&self, oid: Oid) -> Result<&ObjectHeader> {
        self.objects.get(&oid).ok_or(Error::UnknownOid(oid.0))
    }

    pub fn insert_object(&mut self, oid: Oid, mdc: &str) {
        let prev = self.objects.insert(
            oid,
            ObjectHeader {
                mdc: mdc.to_string(),
                roles: BTreeSet::new(),
            },
        );
        assert!(prev.is_none(), "object {oid} already exists");
    }

    pub fn set_mdc(&mut self, oid: Oid, mdc: &str) {
        self.objects.get_mut(&oid).expect("object exists").mdc = mdc.to_string();
    }

    pub fn add_role_to(&mut self, oid: Oid, role: &str) {
        let header = self.objects.get_mut(&oid).expect("object exists");
        let fresh = header.roles.insert(role.to_string());
        assert!(fresh, "object {oid} already in role `{role}`");
    }

    /// Remove the object's header and every row it owns, in any relation.
    pub fn remove_object(&mut self, oid: Oid) {
        self.objects.remove(&oid).expect("object exists");
        for rel in self.relations.values_mut() {
            rel.rows.remove(&oid);
        }
    }

    /// All OIDs stored in the named relation, ascending. Because every
    /// object has a row in each relation along its chain, this is exactly
    /// the extent of a class (self plus all descendants) or of a role.
    pub fn extent(&self, name: &str) -> Result<Vec<Oid>> {
        Ok(self.relation(name)?.rows.keys().copied().collect())
    }

    // ---- oid allocation --------------------------------------------------

    pub fn next_oid(&self) -> u64 {
        self.next_oid
    }

    pub fn set_next_oid(&mut self, next: u64) {
        self.next_oid = next;
    }

    pub fn alloc_oid(&mut self) -> Oid {
        let oid = Oid(self.next_oid);
        self.next_oid += 1;
        oid
    }

    /// Reserve an explicitly requested OID. Only never-seen ids are legal,
    /// so the id must be at or past the allocation cursor.
    pub fn claim_oid(&mut self, oid: Oid) -> Result<()> {
        if oid.0 < self.next_oid {
            return Err(Error::OidConflict(oid.0));
        }
        self.next_oid = oid.0 + 1;
        Ok(())
    }

    // ---- whole-store queries ---------------------------------------------

    /// Every cell holding a reference to `target`, sorted by
    /// (relation, holding oid, column name).
    pub fn find_inbound_refs(&self, target: Oid) -> Vec<(String, Oid, String)> {
        let mut hits = Vec::new();
        for rel in self.relations.values() {
            for (&holder, row) in &rel.rows {
                for (idx, v) in row.iter().enumerate() {
                    if *v == Value::Ref(Some(target)) {
                        hits.push((rel.owner.clone(), holder, rel.columns[idx].clone()));
                    }
                }
            }
        }
        hits.sort();
        hits
    }

    /// Cross-check every storage invariant against the catalog. Returns a
    /// list of human-readable violations; an empty list is a clean bill.
    pub fn audit(&self, catalog: &Catalog) -> Vec<String> {
        let mut bad = Vec::new();

        // Relations mirror catalog entries exactly.
        for def in catalog.ordered() {
            match self.relations.get(def.name()) {
                None => bad.push(format!("no relation for catalog entry `{}`", def.name())),
                Some(rel) => {
                    let declared: Vec<String> =
                        def.attrs().iter().map(|a| a.name.clone()).collect();
                    if rel.columns != declared {
                        bad.push(format!(
                            "relation `{}` columns {:?} do not match declared {:?}",
                            def.name(),
                            rel.columns,
                            declared
                        ));
                    }
                    if rel.is_role == def.is_class() {
                        bad.push(format!("relation `{}` role flag is wrong", def.name()));
                    }
                }
            }
        }
        for name in self.relations.keys() {
            if catalog.get(name).is_none() {
                bad.push(format!("relation `{name}` has no catalog entry"));
            }
        }

        // Each object covers its chain and roles exactly; role bases hold.
        let mut expected: BTreeMap<&str, BTreeSet<Oid>> = BTreeMap::new();
        for (&oid, header) in &self.objects {
            if oid.0 >= self.next_oid {
                bad.push(format!("{oid} is at or past the allocation cursor"));
            }
            let chain = match catalog.chain(&header.mdc) {
                Ok(c) => c,
                Err(_) => {
                    bad.push(format!("{oid} has unknown class `{}`", header.mdc));
                    continue;
                }
            };
            for owner in &chain {
                expected.entry(owner).or_default().insert(oid);
            }
            for role in &header.roles {
                match catalog.get(role) {
                    Some(TypeDef::Role(r)) => {
                        let satisfied = match catalog.get(&r.base) {
                            Some(TypeDef::Class(_)) => chain.contains(&r.base.as_str()),
                            Some(TypeDef::Role(_)) => header.roles.contains(&r.base),
                            None => false,
                        };
                        if !satisfied {
                            bad.push(format!(
                                "{oid} holds role `{role}` without its base `{}`",
                                r.base
                            ));
                        }
                        expected.entry(role).or_default().insert(oid);
                    }
                    _ => bad.push(format!("{oid} holds unknown role `{role}`")),
                }
            }
        }
        for rel in self.relations.values() {
            let want = expected.remove(rel.owner.as_str()).unwrap_or_default();
            let have: BTreeSet<Oid> = rel.rows.keys().copied().collect();
            for extra in have.difference(&want) {
                bad.push(format!("stray row for {extra} in relation `{}`", rel.owner));
            }
            for missing in want.difference(&have) {
                bad.push(format!(
                    "missing row for {missing} in relation `{}`",
                    rel.owner
                ));
            }
        }

        // Cell types match declarations; references point at live objects
        // of a compatible class.
        for rel in self.relations.values() {
            let Some(def) = catalog.get(&rel.owner) else {
                continue;
            };
            for (&oid, row) in &rel.rows {
                for (attr, value) in def.attrs().iter().zip(row) {
                    let ok = match (&attr.ty, value) {
                        (TypeTag::Ref(_), Value::Ref(None)) => true,
                        (TypeTag::Ref(target), Value::Ref(Some(to))) => {
                            match self.objects.get(to) {
                                Some(h) => catalog
                                    .chain(&h.mdc)
                                    .map(|c| c.contains(&target.as_str()))
                                    .unwrap_or(false),
                                None => false,
                            }
                        }
                        (tag, v) => v.matches_kind(tag),
                    };
                    if !ok {
                        bad.push(format!(
                            "cell {}.{} of {oid} violates type {}",
                            rel.owner, attr.name, attr.ty
                        ));
                    }
                }
            }
        }

        bad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::Engine;
    use crate::parser;

    /// Build a consistent catalog/store pair through the engine, then hand
    /// the parts back for direct manipulation.
    fn fixture() -> (Catalog, Store) {
        let mut engine = Engine::in_memory();
        for src in [
            "CREATE CLASS Employee { name: STRING; buddy: REF<Employee> = NULL; }",
            "CREATE CLASS Manager EXTENDS Employee { bonus: INT = 0; }",
            "CREATE CLASS Library { holder: REF<Manager> = NULL; }",
            "CREATE ROLE Mentor FOR Employee { mentee: REF<Employee> = NULL; }",
            r#"NEW Manager(name = "Ann")"#,
            r#"NEW Employee(name = "Bo", buddy = #1)"#,
            "PROGRESS #2 TO Mentor()",
            "NEW Library(holder = #1)",
        ] {
            let stmt = parser::parse_statement(src).unwrap();
            engine.execute(&stmt).unwrap_or_else(|e| panic!("`{src}`: {e}"));
        }
        engine.into_parts()
    }

    fn assert_finding(findings: &[String], needle: &str) {
        assert!(
            findings.iter().any(|f| f.contains(needle)),
            "no finding contains `{needle}`: {findings:?}"
        );
    }

    #[test]
    fn consistent_stores_audit_clean() {
        let (catalog, store) = fixture();
        assert_eq!(store.audit(&catalog), Vec::<String>::new());
    }

    #[test]
    fn audit_finds_missing_chain_rows() {
        let (catalog, mut store) = fixture();
        store
            .relations
            .get_mut("Employee")
            .unwrap()
            .rows
            .remove(&Oid(1));
        assert_finding(
            &store.audit(&catalog),
            "missing row for #1 in relation `Employee`",
        );
    }

    #[test]
    fn audit_finds_stray_rows() {
        let (catalog, mut store) = fixture();
        store
            .insert_row("Mentor", Oid(1), vec![Value::Ref(None)])
            .unwrap();
        assert_finding(
            &store.audit(&catalog),
            "stray row for #1 in relation `Mentor`",
        );
    }

    #[test]
    fn audit_finds_runtime_tag_violations() {
        let (catalog, mut store) = fixture();
        store.set_cell("Manager", Oid(1), "bonus", Value::Str("?".into()));
        assert_finding(
            &store.audit(&catalog),
            "cell Manager.bonus of #1 violates type INT",
        );
    }

    #[test]
    fn audit_finds_dangling_references() {
        let (catalog, mut store) = fixture();
        store.set_cell("Employee", Oid(2), "buddy", Value::Ref(Some(Oid(9))));
        assert_finding(
            &store.audit(&catalog),
            "cell Employee.buddy of #2 violates type REF<Employee>",
        );
    }

    #[test]
    fn audit_finds_mistyped_references() {
        // Library.holder is declared REF<Manager>; #2 is a plain Employee,
        // live but outside the target extent.
        let (catalog, mut store) = fixture();
        store.set_cell("Library", Oid(3), "holder", Value::Ref(Some(Oid(2))));
        assert_finding(
            &store.audit(&catalog),
            "cell Library.holder of #3 violates type REF<Manager>",
        );
    }

    #[test]
    fn audit_finds_partitioning_drift() {
        let (catalog, mut store) = fixture();
        let rel = store.relations.get_mut("Manager").unwrap();
        rel.columns.push("ghost".into());
        for row in rel.rows.values_mut() {
            row.push(Value::Int(0));
        }
        let findings = store.audit(&catalog);
        assert_finding(&findings, "do not match declared");
    }

    #[test]
    fn audit_finds_role_membership_without_base() {
        let (catalog, mut store) = fixture();
        // Hoist the Mentor role onto the Library object, whose chain does
        // not include the role's base class.
        store
            .insert_row("Mentor", Oid(3), vec![Value::Ref(None)])
            .unwrap();
        store.add_role_to(Oid(3), "Mentor");
        assert_finding(
            &store.audit(&catalog),
            "holds role `Mentor` without its base `Employee`",
        );
    }
}
