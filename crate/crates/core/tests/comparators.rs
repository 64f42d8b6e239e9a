mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use demodocus_core::dom::{parse_snapshot, DomNode, DomSnapshot, NodeKind, NodePath};
use demodocus_core::equivalence::{
    build_template, compare_fuzzy_text, levenshtein, pipeline_compare, pipeline_trace, template_compare, CaptureSource,
    EquivalenceConfig, EquivalenceError, Stage, TimeMap, Verdict,
};

use support::*;

#[test]
fn levenshtein_matches_recursive_oracle() {
    assert_eq!(edit_distance_oracle("kitten", "sitting"), 3);
    assert_eq!(levenshtein("kitten", "sitting"), 3);
    assert_eq!(levenshtein("", ""), 0);
    assert_eq!(levenshtein("abc", "abc"), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let a = random_string(&mut rng, 20);
        let b = random_string(&mut rng, 20);
        assert_eq!(levenshtein(&a, &b), edit_distance_oracle(&a, &b), "{a:?} {b:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn levenshtein_is_a_metric(a in "[ab c]{0,12}", b in "[ab c]{0,12}", c in "[ab c]{0,12}") {
        prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }
}

const WORDS: [&str; 6] = ["news", "sale", "12:00", "12:01", "cart", "home"];

/// Random page with a few sections; the generator deliberately produces
/// near-duplicates so every pipeline branch is exercised.
fn random_page(rng: &mut ChaCha8Rng) -> String {
    let mut m = String::from("<main>");
    for _ in 0..rng.gen_range(1..4) {
        m.push_str("<section>");
        for _ in 0..rng.gen_range(1..3) {
            m.push_str(&format!("<p>{}</p>", WORDS.choose(rng).unwrap()));
        }
        m.push_str("</section>");
    }
    m.push_str("</main>");
    m
}

#[test]
fn stage_order_and_exit_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let configs = [EquivalenceConfig::default(), EquivalenceConfig::absolute(0), EquivalenceConfig::absolute(4)];
    let mut seen = BTreeSet::new();
    for _ in 0..3000 {
        let a = parse_snapshot(&random_page(&mut rng), 0).unwrap();
        let b = if rng.gen_bool(0.2) { a.clone() } else { parse_snapshot(&random_page(&mut rng), 0).unwrap() };
        let cfg = &configs[rng.gen_range(0..configs.len())];
        let out = pipeline_trace(&a, &b, cfg);
        let stages: Vec<Stage> = out.trace.iter().map(|(s, _)| *s).collect();
        assert_eq!(stages, [Stage::Exact, Stage::Structure, Stage::FuzzyText][..stages.len()]);
        for (i, (stage, verdict)) in out.trace.iter().enumerate() {
            let last = i + 1 == out.trace.len();
            match stage {
                Stage::Exact => {
                    assert_ne!(*verdict, Verdict::Different);
                    assert_eq!(last, *verdict == Verdict::Equal);
                }
                Stage::Structure => {
                    assert_ne!(*verdict, Verdict::Equal);
                    assert_eq!(last, *verdict == Verdict::Different);
                }
                Stage::FuzzyText => {
                    assert_ne!(*verdict, Verdict::Undecided);
                    assert!(last);
                }
            }
        }
        let (_, final_verdict) = *out.trace.last().unwrap();
        assert_eq!(out.equivalent, final_verdict == Verdict::Equal);
        assert_eq!(pipeline_compare(&a, &b, cfg), out.equivalent);
        assert!(pipeline_compare(&a, &a, cfg));
        seen.insert(stages.len());
    }
    assert_eq!(seen, BTreeSet::from([1, 2, 3]));
}

#[test]
fn timestamp_change_and_added_node() {
    let cfg = EquivalenceConfig::default();
    let a = parse_snapshot("<main><h1>Live scores</h1><p>Updated 12:00:01 by the live feed service</p></main>", 0).unwrap();
    let b = parse_snapshot("<main><h1>Live scores</h1><p>Updated 12:00:02 by the live feed service</p></main>", 0).unwrap();
    let out = pipeline_trace(&a, &b, &cfg);
    assert_eq!(out.trace, vec![(Stage::Exact, Verdict::Undecided), (Stage::Structure, Verdict::Undecided), (Stage::FuzzyText, Verdict::Equal)]);
    assert!(out.equivalent);

    let c = parse_snapshot("<main><h1>Live scores</h1><p>Updated 12:00:01 by the live feed service</p><p>new</p></main>", 0).unwrap();
    let out = pipeline_trace(&a, &c, &cfg);
    assert_eq!(out.trace, vec![(Stage::Exact, Verdict::Undecided), (Stage::Structure, Verdict::Different)]);
    assert!(!out.equivalent);
}

#[test]
fn fuzzy_threshold_is_strict() {
    let a = parse_snapshot("<p>same text</p>", 0).unwrap();
    let b = parse_snapshot("<p>same text</p><!-- differs only in markup -->", 0).unwrap();
    assert_eq!(edit_distance_oracle("same text", "same text"), 0);
    assert_eq!(compare_fuzzy_text(&a, &b, &EquivalenceConfig::absolute(0)), Verdict::Different);
    assert_eq!(compare_fuzzy_text(&a, &b, &EquivalenceConfig::absolute(1)), Verdict::Equal);

    let feed_a = parse_snapshot("<p>Breaking: markets up 10 points</p>", 0).unwrap();
    let feed_b = parse_snapshot("<p>Breaking: markets up 12 points</p>", 0).unwrap();
    let article = parse_snapshot("<p>A completely different story about the weather</p>", 0).unwrap();
    let ten = EquivalenceConfig::absolute(10);
    assert_eq!(compare_fuzzy_text(&feed_a, &feed_b, &ten), Verdict::Equal);
    assert_eq!(compare_fuzzy_text(&feed_a, &article, &ten), Verdict::Different);
}

fn time_map(pages: &[String]) -> TimeMap {
    let mut tm = TimeMap::new();
    for (i, p) in pages.iter().enumerate() {
        let source = if i == 0 { CaptureSource::InitialLoad } else { CaptureSource::Reload };
        tm.push(source, parse_snapshot(p, i as u64).unwrap());
    }
    tm
}

/// Every element path whose facts or presence differ between two
/// instances, reduced to the topmost differing paths.
fn pairwise_diff_oracle(pages: &[DomSnapshot]) -> BTreeSet<NodePath> {
    let facts = |s: &DomSnapshot| -> Vec<(NodePath, String)> {
        s.root
            .descendants()
            .filter(|n| n.kind == NodeKind::Element)
            .map(|n| (n.path.clone(), format!("{}|{:?}|{}", n.tag, n.attributes, n.own_text())))
            .collect()
    };
    let mut differing = BTreeSet::new();
    for i in 0..pages.len() {
        for j in 0..pages.len() {
            let a: std::collections::BTreeMap<_, _> = facts(&pages[i]).into_iter().collect();
            let b: std::collections::BTreeMap<_, _> = facts(&pages[j]).into_iter().collect();
            for (p, fa) in &a {
                match b.get(p) {
                    Some(fb) if fb == fa => {}
                    Some(_) => {
                        differing.insert(p.clone());
                    }
                    None => {
                        differing.insert(p.clone());
                    }
                }
            }
        }
    }
    // Presence differences are reported at the topmost absent node.
    let present_everywhere = |p: &NodePath| pages.iter().all(|s| s.node(p).is_some());
    differing
        .into_iter()
        .filter(|p| present_everywhere(p) || p.parent().map(|q| present_everywhere(&q)).unwrap_or(true))
        .collect()
}

#[test]
fn templates_from_time_maps() {
    let page = |news: &str| format!("<main><h1>Home</h1><p>{news}</p><footer>f</footer></main>");
    let rotating = time_map(&[page("one"), page("two"), page("three")]);
    let t = build_template(&rotating).unwrap();
    assert_eq!(t.unstable_paths, BTreeSet::from([NodePath(vec![0, 1])]));

    let same = time_map(&[page("one"), page("one"), page("one")]);
    assert!(build_template(&same).unwrap().unstable_paths.is_empty());

    let banner = "<main><h1>Home</h1><p>one</p><footer>f</footer><div id=\"banner\"><b>Sale</b></div></main>".to_string();
    let pages = [page("one"), banner, page("one")];
    let t = build_template(&time_map(&pages)).unwrap();
    let snaps: Vec<DomSnapshot> = pages.iter().map(|p| parse_snapshot(p, 0).unwrap()).collect();
    assert_eq!(t.unstable_paths, pairwise_diff_oracle(&snaps));
    assert_eq!(t.unstable_paths, BTreeSet::from([NodePath(vec![0, 3])]));

    assert_eq!(build_template(&time_map(&[page("one")])), Err(EquivalenceError::InsufficientInstances(1)));
}

proptest! {
    #[test]
    fn identical_instances_have_no_unstable_regions(k in 2usize..6, body in "[a-z ]{1,20}") {
        let page = format!("<main><p>{body}x</p><ul><li>a</li></ul></main>");
        let tm = time_map(&vec![page; k]);
        prop_assert!(build_template(&tm).unwrap().unstable_paths.is_empty());
    }
}

fn mutate_inside(root: &mut DomNode, target: &NodePath, rng: &mut ChaCha8Rng) {
    let node = root.find_mut(target).unwrap();
    match rng.gen_range(0..4) {
        0 => node.children = vec![DomNode::text_node(&format!("text {}", rng.gen::<u32>()))],
        1 => node.children.push(DomNode::element("span", vec![], vec![DomNode::text_node("added")])),
        2 => node.children.clear(),
        _ => node.attributes.push(("data-x".into(), rng.gen::<u16>().to_string())),
    }
}

#[test]
fn mutations_inside_unstable_regions_are_ignored() {
    let page = |news: &str| format!("<main><h1>Home</h1><section><p>{news}</p></section><nav><a>Cart</a></nav></main>");
    let t = build_template(&time_map(&[page("a"), page("b"), page("c")])).unwrap();
    let region = NodePath(vec![0, 1, 0]);
    assert_eq!(t.unstable_paths, BTreeSet::from([region.clone()]));
    let base = parse_snapshot(&page("a"), 0).unwrap();
    assert!(template_compare(&t, &base, &base));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut false_new_states = 0;
    for _ in 0..100 {
        let mut root = base.root.clone();
        for _ in 0..rng.gen_range(1..4) {
            mutate_inside(&mut root, &region, &mut rng);
        }
        let mutated = DomSnapshot::from_tree(root, 0);
        if !template_compare(&t, &base, &mutated) {
            false_new_states += 1;
        }
    }
    assert_eq!(false_new_states, 0);

    let outside = parse_snapshot(&page("a").replace("Cart", "Checkout"), 0).unwrap();
    assert!(!template_compare(&t, &base, &outside));
}
