use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DomainError, Element, ElementId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("dependency cycle: {}", fmt_path(.0))]
    CycleDetected(Vec<ElementId>),
    #[error("edge endpoint `{0}` is not an element")]
    UnknownEndpoint(ElementId),
    #[error("duplicate element id `{0}`")]
    DuplicateId(ElementId),
    #[error("unknown element `{0}`")]
    UnknownElement(ElementId),
    #[error(transparent)]
    InvalidElement(#[from] DomainError),
}

fn fmt_path(path: &[ElementId]) -> String {
    path.iter().map(ElementId::as_str).collect::<Vec<_>>().join(" -> ")
}

/// Validated precedence DAG over construction elements.
///
/// Construction goes through [`ElementGraph::build`], so every value of this
/// type is acyclic with all edge endpoints present. The topological order is
/// computed once and cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGraph {
    elements: BTreeMap<ElementId, Element>,
    edges: BTreeSet<(ElementId, ElementId)>,
    predecessors: BTreeMap<ElementId, BTreeSet<ElementId>>,
    successors: BTreeMap<ElementId, BTreeSet<ElementId>>,
    order: Vec<ElementId>,
}

#[derive(Serialize)]
struct GraphDocRef<'a> {
    elements: Vec<&'a Element>,
    edges: &'a BTreeSet<(ElementId, ElementId)>,
}

impl Serialize for ElementGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphDocRef {
            elements: self.elements.values().collect(),
            edges: &self.edges,
        }
        .serialize(serializer)
    }
}

#[derive(Deserialize)]
struct GraphDoc {
    elements: Vec<Element>,
    edges: Vec<(ElementId, ElementId)>,
}

impl<'de> Deserialize<'de> for ElementGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = GraphDoc::deserialize(deserializer)?;
        ElementGraph::build(doc.elements, doc.edges).map_err(serde::de::Error::custom)
    }
}

impl ElementGraph {
    pub fn build(
        elements: Vec<Element>,
        edges: Vec<(ElementId, ElementId)>,
    ) -> Result<Self, GraphError> {
        let mut by_id = BTreeMap::new();
        for element in elements {
            element.validate()?;
            let id = element.id.clone();
            if by_id.insert(id.clone(), element).is_some() {
                return Err(GraphError::DuplicateId(id));
            }
        }

        let mut predecessors: BTreeMap<ElementId, BTreeSet<ElementId>> =
            by_id.keys().map(|id| (id.clone(), BTreeSet::new())).collect();
        let mut successors = predecessors.clone();
        let mut edge_set = BTreeSet::new();
        for (from, to) in edges {
            for end in [&from, &to] {
                if !by_id.contains_key(end) {
                    return Err(GraphError::UnknownEndpoint(end.clone()));
                }
            }
            successors.get_mut(&from).unwrap().insert(to.clone());
            predecessors.get_mut(&to).unwrap().insert(from.clone());
            edge_set.insert((from, to));
        }

        if let Some(cycle) = find_cycle(&successors) {
            return Err(GraphError::CycleDetected(cycle));
        }
        let order = kahn_lexicographic(&predecessors, &successors);

        Ok(Self {
            elements: by_id,
            edges: edge_set,
            predecessors,
            successors,
            order,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn element(&self, id: &ElementId) -> Option<&Element> {
        self.elements.get(id)
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ElementId> {
        self.elements.keys()
    }

    pub fn contains(&self, id: &ElementId) -> bool {
        self.elements.contains_key(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &(ElementId, ElementId)> {
        self.edges.iter()
    }

    /// Deterministic topological order; ties broken by lexicographic id.
    pub fn topological_order(&self) -> &[ElementId] {
        &self.order
    }

    /// Direct predecessors only.
    pub fn predecessors(&self, id: &ElementId) -> Result<&BTreeSet<ElementId>, GraphError> {
        self.predecessors
            .get(id)
            .ok_or_else(|| GraphError::UnknownElement(id.clone()))
    }

    pub fn successors(&self, id: &ElementId) -> Result<&BTreeSet<ElementId>, GraphError> {
        self.successors
            .get(id)
            .ok_or_else(|| GraphError::UnknownElement(id.clone()))
    }

    /// All transitive successors of `id`, in topological order.
    pub fn descendants(&self, id: &ElementId) -> Vec<ElementId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&ElementId> = match self.successors.get(id) {
            Some(s) => s.iter().collect(),
            None => return Vec::new(),
        };
        while let Some(next) = stack.pop() {
            if seen.insert(next.clone()) {
                stack.extend(self.successors[next].iter());
            }
        }
        self.order.iter().filter(|e| seen.contains(*e)).cloned().collect()
    }
}

/// Depth-first search in id order; returns the first cycle found as a
/// closed path `[a, b, .., a]`.
fn find_cycle(successors: &BTreeMap<ElementId, BTreeSet<ElementId>>) -> Option<Vec<ElementId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        OnStack,
        Done,
    }
    let mut marks: BTreeMap<&ElementId, Mark> = successors.keys().map(|k| (k, Mark::New)).collect();

    for root in successors.keys() {
        if marks[root] != Mark::New {
            continue;
        }
        // (node, iterator over its successors)
        let mut stack: Vec<(&ElementId, std::collections::btree_set::Iter<'_, ElementId>)> =
            vec![(root, successors[root].iter())];
        marks.insert(root, Mark::OnStack);
        while let Some((node, iter)) = stack.last_mut() {
            let node = *node;
            match iter.next() {
                Some(next) => match marks[next] {
                    Mark::New => {
                        marks.insert(next, Mark::OnStack);
                        stack.push((next, successors[next].iter()));
                    }
                    Mark::OnStack => {
                        let start = stack.iter().position(|(n, _)| *n == next).unwrap();
                        let mut path: Vec<ElementId> =
                            stack[start..].iter().map(|(n, _)| (*n).clone()).collect();
                        path.push(next.clone());
                        return Some(path);
                    }
                    Mark::Done => {}
                },
                None => {
                    marks.insert(node, Mark::Done);
                    stack.pop();
                }
            }
        }
    }
    None
}

fn kahn_lexicographic(
    predecessors: &BTreeMap<ElementId, BTreeSet<ElementId>>,
    successors: &BTreeMap<ElementId, BTreeSet<ElementId>>,
) -> Vec<ElementId> {
    let mut indegree: BTreeMap<&ElementId, usize> =
        predecessors.iter().map(|(k, v)| (k, v.len())).collect();
    let mut ready: BTreeSet<&ElementId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut order = Vec::with_capacity(predecessors.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.clone());
        for succ in &successors[next] {
            let d = indegree.get_mut(succ).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(succ);
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ElementKind, SpatialRef};

    fn id(s: &str) -> ElementId {
        ElementId::new(s).unwrap()
    }

    fn el(name: &str, kind: ElementKind) -> Element {
        Element {
            id: id(name),
            kind,
            location: SpatialRef::ExplicitId(id(name)),
            planned_placement: "2025-03-01T08:00:00Z".parse().unwrap(),
            design_strength_mpa: 30.0,
        }
    }

    fn chain(names: &[&str]) -> ElementGraph {
        let elements = names
            .iter()
            .zip(ElementKind::STAGES.iter().cycle())
            .map(|(n, k)| el(n, k.clone()))
            .collect();
        let edges = names.windows(2).map(|w| (id(w[0]), id(w[1]))).collect();
        ElementGraph::build(elements, edges).unwrap()
    }

    #[test]
    fn bridge_chain_orders_by_stage() {
        // ids chosen so that lexicographic order differs from stage order
        let g = chain(&["shaft", "column", "cap", "girder", "deck"]);
        let order: Vec<&str> = g.topological_order().iter().map(|e| e.as_str()).collect();
        assert_eq!(order, ["shaft", "column", "cap", "girder", "deck"]);
        assert_eq!(g.predecessors(&id("deck")).unwrap(), &BTreeSet::from([id("girder")]));
        assert!(g.predecessors(&id("shaft")).unwrap().is_empty());
        assert!(matches!(g.predecessors(&id("nope")), Err(GraphError::UnknownElement(_))));
    }

    #[test]
    fn singleton_and_empty() {
        let g = ElementGraph::build(vec![el("A", ElementKind::Column)], vec![]).unwrap();
        assert_eq!(g.topological_order(), &[id("A")]);
        let empty = ElementGraph::build(vec![], vec![]).unwrap();
        assert!(empty.topological_order().is_empty());
    }

    #[test]
    fn two_cycle_reports_closed_path() {
        let err = ElementGraph::build(
            vec![el("A", ElementKind::Column), el("B", ElementKind::Cap)],
            vec![(id("A"), id("B")), (id("B"), id("A"))],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::CycleDetected(vec![id("A"), id("B"), id("A")]));
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let err = ElementGraph::build(vec![el("A", ElementKind::Column)], vec![(id("A"), id("A"))])
            .unwrap_err();
        assert_eq!(err, GraphError::CycleDetected(vec![id("A"), id("A")]));
    }

    #[test]
    fn duplicate_and_unknown_endpoint() {
        let err = ElementGraph::build(
            vec![el("A", ElementKind::Column), el("A", ElementKind::Cap)],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::DuplicateId(id("A")));
        let err =
            ElementGraph::build(vec![el("A", ElementKind::Column)], vec![(id("A"), id("Z"))]).unwrap_err();
        assert_eq!(err, GraphError::UnknownEndpoint(id("Z")));
    }

    #[test]
    fn diamond_uses_lexicographic_tie_break() {
        let g = ElementGraph::build(
            ["D", "C", "B", "A"].iter().map(|n| el(n, ElementKind::Column)).collect(),
            vec![
                (id("A"), id("B")),
                (id("A"), id("C")),
                (id("B"), id("D")),
                (id("C"), id("D")),
            ],
        )
        .unwrap();
        assert_eq!(g.topological_order(), &[id("A"), id("B"), id("C"), id("D")]);
        assert_eq!(g.predecessors(&id("D")).unwrap(), &BTreeSet::from([id("B"), id("C")]));
        assert_eq!(g.descendants(&id("A")), vec![id("B"), id("C"), id("D")]);
    }

    #[test]
    fn graph_json_round_trip_revalidates() {
        let g = chain(&["a", "b", "c"]);
        let text = serde_json::to_string(&g).unwrap();
        let back: ElementGraph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let cyclic = text.replace(r#"["a","b"]"#, r#"["c","a"]"#).replace(r#""edges":["#, r#""edges":[["a","b"],"#);
        assert!(serde_json::from_str::<ElementGraph>(&cyclic).is_err());
    }
}
