mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use serde_json::{json, Map, Value};

use chainsmell::aggregate::aggregate;
use chainsmell::extract::extract_npm;
use chainsmell::fixtures::{FixtureStore, RecordedResponse, RequestKey};
use chainsmell::gate::{evaluate, GateConfig, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};
use chainsmell::http::{Fetcher, RequestLog};
use chainsmell::pond::DirtyPond;
use chainsmell::registry::{RegistryClient, RegistryConfig};
use chainsmell::repo::{GitHub, GitHubConfig, RepoChecker};
use chainsmell::report::{render_report, ReportOptions};
use chainsmell::smells::{detect, SeverityPolicy};
use chainsmell::tree::TreeBuilder;
use chainsmell::{Ecosystem, PackageCoordinate, Severity, SmellId};

use common::*;

#[test]
fn severity_order_is_total_and_strict() {
    let all = Severity::ALL;
    assert_eq!(
        all,
        [Severity::Low, Severity::Medium, Severity::High, Severity::Critical]
    );
    for (i, a) in all.iter().enumerate() {
        for (j, b) in all.iter().enumerate() {
            assert_eq!(a < b, i < j, "{a:?} < {b:?}");
            assert_eq!(a == b, i == j);
        }
    }
    for smell in SmellId::ALL {
        assert!(all.contains(&chainsmell::model::default_severity(smell)));
    }
}

// Lockfiles

const POOL: [&str; 6] = ["alpha", "beta", "gamma", "@scope/delta", "eps", "zeta"];

/// A v3 lockfile installing `coords`: the first version of each name at the
/// top level, further versions nested below another package or, failing
/// that, under an alias. `dupes` adds a second nested copy of a coordinate.
fn lockfile(coords: &[(&str, String)], force_alias: &[bool], dupes: &[bool]) -> (Value, usize) {
    let mut packages = Map::new();
    let mut root_deps = Map::new();
    let mut top: BTreeMap<&str, String> = BTreeMap::new();
    let mut aliases = 0;
    let mut nested = Vec::new();
    for (i, (name, version)) in coords.iter().enumerate() {
        if !top.contains_key(name) && !force_alias[i] {
            top.insert(name, version.clone());
            packages.insert(
                format!("node_modules/{name}"),
                json!({"version": version, "dependencies": {}}),
            );
            root_deps.insert(name.to_string(), json!(format!("^{version}")));
        } else {
            nested.push(i);
        }
    }
    for i in nested {
        let (name, version) = &coords[i];
        let parent = top
            .keys()
            .find(|p| *p != name && !packages.contains_key(&format!("node_modules/{p}/node_modules/{name}")))
            .copied();
        match parent.filter(|_| !force_alias[i]) {
            Some(parent) => {
                let path = format!("node_modules/{parent}/node_modules/{name}");
                packages.insert(path, json!({"version": version}));
                let entry = packages.get_mut(&format!("node_modules/{parent}")).unwrap();
                entry["dependencies"][name.to_string()] = json!(version);
            }
            None => {
                let alias = format!("alias-{i}");
                packages.insert(
                    format!("node_modules/{alias}"),
                    json!({"name": name, "version": version}),
                );
                root_deps.insert(alias, json!(format!("npm:{name}@{version}")));
                aliases += 1;
            }
        }
    }
    for (i, (name, version)) in coords.iter().enumerate() {
        let host = top.keys().find(|p| *p != name).copied();
        if let (true, Some(host)) = (dupes[i], host) {
            let path = format!("node_modules/{host}/node_modules/{name}");
            if !packages.contains_key(&path) {
                packages.insert(path, json!({"version": version}));
                packages.get_mut(&format!("node_modules/{host}")).unwrap()["dependencies"][name.to_string()] =
                    json!(version);
            }
        }
    }
    packages.insert(
        "".into(),
        json!({"name": "app", "version": "1.0.0", "dependencies": root_deps}),
    );
    (
        json!({"name": "app", "version": "1.0.0", "lockfileVersion": 3, "requires": true, "packages": packages}),
        aliases,
    )
}

fn arb_coords() -> impl Strategy<Value = Vec<(&'static str, String)>> {
    prop::collection::btree_set((prop::sample::select(POOL.to_vec()), 0u8..3, 0u8..12), 1..12)
        .prop_map(|set| set.into_iter().map(|(n, a, b)| (n, format!("{a}.{b}.0"))).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lockfile_yields_one_node_per_installed_version(
        (coords, force_alias, dupes) in arb_coords().prop_flat_map(|c| {
            let n = c.len();
            (Just(c), prop::collection::vec(prop::bool::weighted(0.15), n), prop::collection::vec(prop::bool::weighted(0.3), n))
        })
    ) {
        let (lock, alias_count) = lockfile(&coords, &force_alias, &dupes);
        let bytes = serde_json::to_vec_pretty(&lock).unwrap();
        let tree = extract_npm(&bytes).unwrap();

        let want: BTreeSet<PackageCoordinate> =
            coords.iter().map(|(n, v)| PackageCoordinate::npm(n, v).unwrap()).collect();
        let got: BTreeSet<PackageCoordinate> = tree.nodes.iter().map(|n| n.coordinate.clone()).collect();
        prop_assert_eq!(tree.nodes.len(), want.len());
        prop_assert_eq!(got, want);

        prop_assert_eq!(tree.aliases.len(), alias_count);
        for alias in &tree.aliases {
            prop_assert!(tree.contains(&alias.actual), "alias target {} missing", alias.actual);
        }
        prop_assert!(tree.validate().is_ok());

        let again = extract_npm(&bytes).unwrap();
        prop_assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&tree).unwrap());
    }
}

// Smell engine

fn single_tree(coord: &PackageCoordinate, alias: bool) -> chainsmell::tree::DependencyTree {
    let project = project_coord(coord.ecosystem, "subject-project");
    let mut b = TreeBuilder::new(project.clone());
    b.add_node(chainsmell::tree::TreeNode {
        coordinate: coord.clone(),
        scope: None,
        local: false,
    });
    b.add_edge(project.clone(), coord.clone());
    if alias && coord.ecosystem == Ecosystem::Npm {
        b.add_alias(chainsmell::tree::AliasBinding {
            declared_name: "nickname".into(),
            actual: coord.clone(),
            declared_in: project,
        });
    }
    b.build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn smells_one_and_two_never_coexist(f in arb_facets(), maven in any::<bool>()) {
        let eco = if maven { Ecosystem::Maven } else { Ecosystem::Npm };
        let coord = package_coord(eco, "subject", "1.0.0");
        let d = detect(&facts_for(&coord, &f, ts(0)), &single_tree(&coord, f.alias), &SeverityPolicy::default());
        let smells: BTreeSet<SmellId> = d.findings.iter().map(|x| x.smell).collect();
        prop_assert!(!(smells.contains(&SmellId::NoSourceCodeUrl) && smells.contains(&SmellId::InvalidSourceCodeUrl)));
        // a smell is either found, undecided or clear, never two of them
        for m in &d.indeterminate {
            prop_assert!(!smells.contains(&m.smell), "{:?} both found and indeterminate", m.smell);
        }
    }

    #[test]
    fn maven_never_reports_unsupported_smells(f in arb_facets()) {
        let coord = package_coord(Ecosystem::Maven, "subject", "1.0.0");
        let d = detect(&facts_for(&coord, &f, ts(0)), &single_tree(&coord, f.alias), &SeverityPolicy::default());
        for smell in d.findings.iter().map(|x| x.smell).chain(d.indeterminate.iter().map(|m| m.smell)) {
            prop_assert!(chainsmell::model::is_supported(smell, Ecosystem::Maven), "{:?}", smell);
        }
    }

    #[test]
    fn evidence_names_the_observed_value(f in arb_facets()) {
        let coord = package_coord(Ecosystem::Npm, "subject", "3.1.4");
        let facts = facts_for(&coord, &f, ts(0));
        let d = detect(&facts, &single_tree(&coord, f.alias), &SeverityPolicy::default());
        for finding in &d.findings {
            let e = &finding.evidence;
            match finding.smell {
                SmellId::InvalidSourceCodeUrl => {
                    let raw = facts.registry.source_url.as_deref().unwrap();
                    prop_assert!(e.contains(raw), "{}", e);
                }
                SmellId::InaccessibleTag => prop_assert!(e.contains("v3.1.4"), "{}", e),
                SmellId::Deprecated => {
                    if let Some(msg) = &facts.registry.deprecation_message {
                        prop_assert!(e.contains(msg.as_str()) || e.contains(&serde_json::to_string(msg).unwrap()), "{}", e);
                    }
                }
                SmellId::Fork => prop_assert!(e.contains("https://github.com/upstream/subject"), "{}", e),
                SmellId::Aliased => prop_assert!(e.contains("nickname"), "{}", e),
                _ => prop_assert!(!e.is_empty()),
            }
        }
    }
}

// Registry and repository collectors

fn e2e_coords(eco: Ecosystem) -> Vec<PackageCoordinate> {
    analyze_e2e(eco, 4)
        .tree
        .nodes
        .into_iter()
        .map(|n| n.coordinate)
        .collect()
}

fn registry_config(eco: Ecosystem) -> RegistryConfig {
    e2e_config(eco).registry
}

#[test]
fn registry_facts_are_cached_and_pure() {
    for eco in [Ecosystem::Npm, Ecosystem::Maven] {
        let store = FixtureStore::new(e2e_dir(eco).join("fixtures"));
        let config = registry_config(eco);
        let fetcher = Fetcher::offline(store.clone());
        let client = RegistryClient::new(&fetcher, &config);
        let other = Fetcher::offline(store);
        let other_client = RegistryClient::new(&other, &config);
        for coord in e2e_coords(eco) {
            let mut log = RequestLog::default();
            let first = client.fetch_registry_facts(&coord, ts(1), &mut log);
            let sent = fetcher.requests_sent();
            let mut log2 = RequestLog::default();
            let second = client.fetch_registry_facts(&coord, ts(1), &mut log2);
            assert_eq!(fetcher.requests_sent(), sent, "{coord}: second fetch went out again");
            assert_eq!(format!("{first:?}"), format!("{second:?}"), "{coord}");
            assert_eq!(log.digest(), log2.digest(), "{coord}");

            let fresh = other_client.fetch_registry_facts(&coord, ts(1), &mut RequestLog::default());
            assert_eq!(format!("{first:?}"), format!("{fresh:?}"), "{coord}");
            if eco == Ecosystem::Maven {
                let facts = first.unwrap();
                assert!(facts.deprecated.is_none() && facts.provenance.is_none(), "{coord}");
            }
        }
    }
}

fn json_response(status: u16, body: Value) -> RecordedResponse {
    RecordedResponse {
        status,
        headers: BTreeMap::from([("content-type".to_string(), "application/json".to_string())]),
        body: serde_json::to_vec(&body).unwrap(),
    }
}

#[test]
fn unreachable_repositories_get_no_further_lookups() {
    let dir = tempfile::tempdir().unwrap();
    let store = FixtureStore::new(dir.path());
    for (full, status) in [("gone/a", 404), ("gone/b", 410), ("gone/c", 451)] {
        store
            .save(
                &RequestKey::new("github", full, "-", "repo"),
                &json_response(status, json!({"message": "Not Found"})),
            )
            .unwrap();
    }
    let fetcher = Fetcher::offline(store);
    let checker = RepoChecker::new(
        &fetcher,
        vec![Box::new(GitHub::new(&fetcher, GitHubConfig::default()))],
        Vec::new(),
    );
    let coord = PackageCoordinate::npm("pkg", "1.0.0").unwrap();
    for full in ["gone/a", "gone/b", "gone/c"] {
        let mut log = RequestLog::default();
        let facts = checker
            .check(
                &format!("https://github.com/{full}"),
                &coord,
                Some("a".repeat(40).as_str()),
                &mut log,
            )
            .unwrap();
        assert_ne!(facts.accessibility, Some(chainsmell::repo::Accessibility::Accessible));
        assert_eq!(log.requests(), 1, "{full}: {:?}", log.lines());
        assert!(facts.tag_resolution.is_none() && facts.is_fork.is_none() && facts.checked_candidates.is_empty());
    }
}

// Gate

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gate_is_total_and_monotone(pond in arb_pond()) {
        let mut last = None;
        for fail_on in Severity::ALL {
            let cfg = GateConfig { fail_on, ..pond.config.clone() };
            let code = evaluate(&pond, &cfg).exit_code;
            prop_assert!([EXIT_PASS, EXIT_FAIL, EXIT_ERROR].contains(&code));
            if last == Some(EXIT_PASS) {
                prop_assert_ne!(code, EXIT_FAIL, "raising fail_on to {:?} failed a passing gate", fail_on);
            }
            last = Some(code);
        }
    }

    #[test]
    fn ignored_findings_never_gate(pond in arb_pond()) {
        let mut all_ignored = pond.clone();
        for f in &mut all_ignored.findings {
            f.ignored.get_or_insert_with(|| "accepted".into());
        }
        all_ignored.canonicalize();
        let cfg = GateConfig { fail_on: Severity::Low, max_findings: BTreeMap::new(), ..pond.config.clone() };
        let decision = evaluate(&all_ignored, &cfg);
        prop_assert_ne!(decision.exit_code, EXIT_FAIL);
        prop_assert!(decision.triggering.is_empty());

        let report = render_report(&all_ignored, &ReportOptions::default());
        for f in &all_ignored.findings {
            let line = format!("ignored: {}", f.ignored.as_deref().unwrap());
            prop_assert!(report.contains(&line), "report lacks {}", line);
        }
    }

    #[test]
    fn report_is_idempotent_and_traceable(pond in arb_pond()) {
        let options = ReportOptions::default();
        let a = render_report(&pond, &options);
        prop_assert_eq!(&a, &render_report(&pond, &options));
        let mut mentions: Vec<(u8, String)> = Vec::new();
        let mut section = None;
        for line in a.lines() {
            if let Some(head) = line.strip_prefix("## ") {
                section = head.split_once(". ").and_then(|(n, _)| n.parse::<u8>().ok());
            } else if let (Some(s), Some(rest)) = (section, line.strip_prefix("- [`")) {
                mentions.push((s, rest.split_once("`]").unwrap().0.to_string()));
            }
        }
        mentions.sort();
        let mut findings: Vec<(u8, String)> = pond.findings.iter().map(|f| (f.smell.id(), f.coordinate.to_string())).collect();
        findings.sort();
        prop_assert_eq!(mentions, findings);
    }
}

// Aggregator

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn aggregate_ignores_order_and_counts_each_package_once(
        ponds in prop::collection::vec(arb_pond(), 0..8),
        seed in any::<u64>(),
    ) {
        // distinct analysis times
        let ponds: Vec<DirtyPond> = ponds
            .into_iter()
            .enumerate()
            .map(|(i, mut p)| {
                p.analyzed_at = ts(1_700_000_000 + i as i64 * 60);
                for f in &mut p.facts {
                    f.registry.fetched_at = p.analyzed_at;
                }
                p
            })
            .collect();
        let mut shuffled = ponds.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = aggregate(&ponds).unwrap();
        let b = aggregate(&shuffled).unwrap();
        prop_assert_eq!(&a, &b);

        for report in &a.reports {
            let mut seen = BTreeSet::new();
            let mut new_per_pond = 0;
            for p in ponds.iter().filter(|p| p.project.ecosystem == report.ecosystem) {
                for n in &p.tree.nodes {
                    if seen.insert(n.coordinate.clone()) {
                        new_per_pond += 1;
                    }
                }
            }
            prop_assert_eq!(report.total_unique_packages, new_per_pond);
            for c in report.per_smell.values() {
                prop_assert!(c.count <= report.total_unique_packages);
            }
        }
    }
}
