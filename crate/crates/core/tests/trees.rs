mod common;

use rand::Rng;

use treerules::trees::NODE_TABLE_HEADER;
use treerules::{
    build_forest, extract_conditions, extract_rules, generate_team_data, ColumnSchema, Condition,
    Ensemble, ForestParams, Node, Outcome, Schema, Split, Task,
};

/// The 19 internal-heavy rows of the published example tree, with its
/// missing leaves 20..35 filled in.
fn example_table() -> String {
    let internal = [
        (1, 2, 3, 5, 2),
        (2, 4, 5, 1, 3),
        (3, 6, 7, 3, 2),
        (4, 8, 9, 9, 3),
        (5, 10, 11, 2, 2),
        (6, 12, 13, 1, 2),
        (7, 14, 15, 7, 2),
        (9, 16, 17, 4, 1),
        (10, 18, 19, 3, 3),
        (11, 20, 21, 3, 3),
        (12, 22, 23, 2, 2),
        (13, 24, 25, 9, 2),
        (14, 26, 27, 9, 2),
        (16, 28, 29, 7, 2),
        (17, 30, 31, 6, 2),
        (18, 32, 33, 7, 3),
        (19, 34, 35, 8, 1),
    ];
    let mut s = NODE_TABLE_HEADER.join(",") + "\n";
    for id in 1..=35 {
        match internal.iter().find(|r| r.0 == id) {
            Some(&(_, l, r, var, point)) => s += &format!("1,{id},{l},{r},{var},{point},1,0\n"),
            None => {
                let pred = match id {
                    8 => 1,
                    15 => 2,
                    _ => 1 + id % 2,
                };
                s += &format!("1,{id},0,0,0,0,-1,{pred}\n");
            }
        }
    }
    s
}

fn example_schema() -> Schema {
    Schema {
        predictors: (1..=9)
            .map(|j| ColumnSchema::numeric(format!("X{j}")))
            .collect(),
        target: ColumnSchema::categorical("y", ["1", "2"]),
    }
}

#[test]
fn published_example_tree_parses() {
    let schema = example_schema();
    let text = example_table();
    let e = Ensemble::import_node_tables(text.as_bytes(), &schema).unwrap();
    let tree = &e.trees()[0];
    assert_eq!(tree.len(), 35);
    assert_eq!(tree.n_leaves(), 18);
    match &tree.nodes()[0] {
        Node::Internal {
            var,
            split,
            left,
            right,
            ..
        } => {
            assert_eq!(*var, 4);
            assert_eq!(*split, Split::Numeric(2.0));
            assert_eq!((*left, *right), (1, 2));
        }
        n => panic!("root is {n:?}"),
    }

    let rules = extract_rules(&e);
    assert!(rules.warnings.is_empty());
    assert_eq!(rules.rules.len(), 18);
    // Node 8: left at nodes 1, 2 and 4.
    let first = &rules.rules[0];
    assert_eq!(
        first.condition,
        Condition::parse("X1 <= 3 & X5 <= 2 & X9 <= 3", &schema).unwrap()
    );
    assert_eq!(first.outcome, Outcome::Class(0));
    // Node 15: right at nodes 1, 3 and 7.
    let i = rules.provenance.iter().position(|s| s.node == 15).unwrap();
    assert_eq!(
        rules.rules[i].condition,
        Condition::parse("X3 > 2 & X5 > 2 & X7 > 2", &schema).unwrap()
    );
    assert_eq!(rules.rules[i].outcome, Outcome::Class(1));

    let mut out = Vec::new();
    e.export_node_tables(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);

    let truncated = extract_conditions(&e, Some(2)).unwrap();
    assert_eq!(truncated.conditions.len(), 2);
}

#[test]
fn example_tree_routes_like_its_rules() {
    let schema = example_schema();
    let e = Ensemble::import_node_tables(example_table().as_bytes(), &schema).unwrap();
    let rules = extract_rules(&e).rules;
    let mut r = common::rng(11);
    for _ in 0..500 {
        let x: Vec<treerules::Cell> = (0..9)
            .map(|_| treerules::Cell::Num(f64::from(r.random_range(0..5u32))))
            .collect();
        let (_, pred) = e.trees()[0].route(&x).unwrap();
        let matching: Vec<_> = rules
            .iter()
            .filter(|rule| rule.condition.matches(&x))
            .collect();
        assert_eq!(matching.len(), 1);
        assert_eq!(matching[0].outcome, pred);
    }
}

fn team() -> treerules::Dataset {
    generate_team_data(100, 20, 10, 3).unwrap()
}

/// With every feature tried at each node the forest learns the two-player
/// interaction. A single 100-row draw is noisy (0.03 to 0.28 across data
/// seeds), so the bound applies to the mean over draws.
#[test]
fn team_forest_out_of_bag_error() {
    let errors: Vec<f64> = (0..20)
        .map(|data_seed| {
            let d = generate_team_data(100, 20, 10, data_seed).unwrap();
            let params = ForestParams {
                mtry: Some(20),
                seed: 1,
                ..ForestParams::default()
            };
            build_forest(&d, &params).unwrap().oob_error(&d).unwrap()
        })
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!(mean < 0.2, "out-of-bag errors {errors:?}");
}

#[test]
fn team_forest_ranks_the_two_players_first() {
    let d = team();
    let e = build_forest(
        &d,
        &ForestParams {
            seed: 1,
            ..ForestParams::default()
        },
    )
    .unwrap();
    let imp = e.importance();
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]));
    let mut top = order[..2].to_vec();
    top.sort_unstable();
    assert_eq!(top, vec![0, 1], "importances {imp:?}");
    assert_eq!(imp.iter().cloned().fold(0.0, f64::max), 1.0);
    assert!(imp.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

/// The target is a function of the two players alone, so any other column
/// can be permuted without changing it.
#[test]
fn only_the_two_players_determine_the_target() {
    let d = team();
    let win = |row: usize| d.outcome(row) == Outcome::Class(1);
    for row in 0..d.n_rows() {
        let x = d.row(row);
        let yes = |j: usize| x[j] == treerules::Cell::Level(1);
        assert_eq!(win(row), yes(0) != yes(1));
    }
}

#[test]
fn team_extraction_yields_order_of_two_thousand_conditions() {
    let d = team();
    let params = ForestParams {
        seed: 1,
        ..ForestParams::default()
    }
    .with_uniform_penalty(0.8, 20);
    let e = build_forest(&d, &params).unwrap();
    let set = extract_conditions(&e, Some(6)).unwrap();
    assert!(
        (1000..=4000).contains(&set.conditions.len()),
        "{}",
        set.conditions.len()
    );
    assert!(set.conditions.iter().all(|c| c.len() <= 5));
    let unique = treerules::dedup_conditions(&set.conditions);
    assert!(unique.len() <= set.conditions.len());
}

/// Penalizing new features makes a tree reuse the ones it already has.
#[test]
fn regularization_reduces_features_used() {
    let mut holds = 0;
    for seed in 0..50u64 {
        let mut r = common::rng(seed);
        let schema = Schema {
            predictors: (1..=12)
                .map(|j| ColumnSchema::numeric(format!("X{j}")))
                .collect(),
            target: ColumnSchema::categorical("y", ["a", "b"]),
        };
        let mut d = common::random_dataset(&mut r, &schema, 150);
        // Give the first feature some signal so trees are not pure noise.
        let y: Vec<u32> = (0..d.n_rows())
            .map(|i| match d.cell(i, 0) {
                treerules::Cell::Num(v) if v > 5.0 => u32::from(r.random_bool(0.8)),
                _ => u32::from(r.random_bool(0.2)),
            })
            .collect();
        d = treerules::Dataset::new(
            schema.clone(),
            d.columns().to_vec(),
            treerules::Column::Categorical(y),
        )
        .unwrap();
        let base = ForestParams {
            n_trees: 1,
            seed,
            ..ForestParams::default()
        };
        let plain = build_forest(&d, &base).unwrap();
        let reg = build_forest(&d, &base.clone().with_uniform_penalty(0.5, 12)).unwrap();
        if reg.used_features().len() <= plain.used_features().len() {
            holds += 1;
        }
    }
    assert!(holds >= 45, "held in {holds} of 50 seeds");
}

#[test]
fn unit_penalty_changes_nothing() {
    let d = team();
    let base = ForestParams {
        n_trees: 10,
        seed: 4,
        ..ForestParams::default()
    };
    let plain = build_forest(&d, &base).unwrap();
    let unit = build_forest(&d, &base.clone().with_uniform_penalty(1.0, 20)).unwrap();
    assert!(plain.same_structure(&unit));
    assert_eq!(plain.task(), Task::Classification);
}
