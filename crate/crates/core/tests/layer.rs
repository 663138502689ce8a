mod common;

use common::*;
use rand::Rng;

use tgat::autodiff::{Matrix, Tape};
use tgat::graph::{NeighborQuery, SamplingStrategy, TemporalGraph};
use tgat::model::{
    attend_head, build_entity_matrix, AttentionMode, BoundHead, Combine, ForwardSettings, ModelDims, ModelInit,
    TgatModel, TimeBlock,
};
use tgat::time_encoding::PositionalKind;

fn vec_mat(x: &[f64], m: &Matrix) -> Vec<f64> {
    assert_eq!(x.len(), m.rows());
    (0..m.cols())
        .map(|c| (0..m.rows()).map(|r| x[r] * m.get(r, c)).sum())
        .collect()
}

/// Plain-loop reimplementation of the recursive forward pass, reading every
/// neighbor (no cap).
fn oracle(model: &TgatModel, g: &TemporalGraph, node: usize, t: f64, layer: usize) -> Vec<f64> {
    let raw = g.node_features(node).unwrap().to_vec();
    if layer == 0 {
        return raw;
    }
    let p = &model.layers[layer - 1];
    let d = model.dims;
    let entries = g
        .temporal_neighborhood(node, t, &NeighborQuery::new(usize::MAX, SamplingStrategy::MostRecent), 0)
        .unwrap()
        .entries;
    let mut neighborhood = Vec::new();
    if entries.is_empty() {
        neighborhood = vec![0.0; d.heads * d.head_dim];
    } else {
        let mut rows = Vec::new();
        let mut q_row = oracle(model, g, node, t, layer - 1);
        q_row.extend(vec![0.0; g.edge_dim()]);
        q_row.extend(model.time_encoder.encode(0.0));
        rows.push(q_row);
        for e in &entries {
            let mut r = oracle(model, g, e.peer, e.timestamp, layer - 1);
            r.extend_from_slice(g.edge_features(e.event));
            r.extend(model.time_encoder.encode(t - e.timestamp));
            rows.push(r);
        }
        for head in &p.heads {
            let q = vec_mat(&rows[0], &head.w_q);
            let scores: Vec<f64> = rows[1..]
                .iter()
                .map(|r| dot(&q, &vec_mat(r, &head.w_k)) / (d.head_dim as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            let mut h = vec![0.0; d.head_dim];
            for (r, s) in rows[1..].iter().zip(&scores) {
                let a = (s - m).exp() / z;
                for (hi, vi) in h.iter_mut().zip(vec_mat(r, &head.w_v)) {
                    *hi += a * vi;
                }
            }
            neighborhood.extend(h);
        }
    }
    neighborhood.extend(&raw);
    let hidden: Vec<f64> = vec_mat(&neighborhood, &p.w0)
        .iter()
        .zip(p.b0.data())
        .map(|(a, b)| (a + b).max(0.0))
        .collect();
    vec_mat(&hidden, &p.w1).iter().zip(p.b1.data()).map(|(a, b)| a + b).collect()
}

fn full_settings() -> ForwardSettings {
    ForwardSettings {
        query: NeighborQuery::new(64, SamplingStrategy::MostRecent),
        dropout: 0.0,
        seed: 0,
    }
}

#[test]
fn two_layer_forward_matches_hand_unrolled_oracle() {
    let g = four_node_graph();
    for heads in [1, 2] {
        let model = small_model(&g, heads, 2, AttentionMode::Learned, 7 + heads as u64);
        for (node, t) in [(0, 6.0), (2, 4.5), (3, 5.0), (1, 0.5), (0, 3.0)] {
            let got = model.embed(&g, node, t, &full_settings()).unwrap();
            let want = oracle(&model, &g, node, t, 2);
            assert!(
                max_abs_diff(&got, &want) < 1e-12,
                "heads {heads} node {node} t {t}: {got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn node_without_history_uses_zero_neighborhood() {
    let g = four_node_graph();
    let model = small_model(&g, 2, 1, AttentionMode::Learned, 1);
    let got = model.embed(&g, 3, 1.0, &full_settings()).unwrap();
    assert_eq!(got, oracle(&model, &g, 3, 1.0, 1));
}

#[test]
fn entity_matrix_rows_follow_layout() {
    let g = four_node_graph();
    let sample = g
        .temporal_neighborhood(0, 5.0, &NeighborQuery::new(10, SamplingStrategy::MostRecent), 0)
        .unwrap();
    // node 0 before t = 5: events at 1 (peer 1) and 3 (peer 2)
    assert_eq!(sample.entries.iter().map(|e| e.peer).collect::<Vec<_>>(), vec![1, 2]);

    let freqs = vec![0.3, 1.1];
    let enc = tgat::time_encoding::TimeEncoder::new(freqs.clone()).unwrap();
    let mut tape = Tape::new();
    let omega = tape.constant(Matrix::row_vector(freqs));
    let target = tape.constant(Matrix::row_vector(vec![9.0, 8.0]));
    let hidden = [
        tape.constant(Matrix::row_vector(vec![1.0, 2.0])),
        tape.constant(Matrix::row_vector(vec![3.0, 4.0])),
    ];
    let z = build_entity_matrix(&mut tape, target, &hidden, &sample, &g, TimeBlock::Functional { omega }, Combine::Concat)
        .unwrap();
    let z = tape.value(z).clone();
    assert_eq!(z.shape(), (3, 2 + 1 + 4));
    let expect = |h: [f64; 2], e: f64, dt: f64| {
        let mut r = h.to_vec();
        r.push(e);
        r.extend(enc.encode(dt));
        r
    };
    assert!(max_abs_diff(z.row(0), &expect([9.0, 8.0], 0.0, 0.0)) < 1e-15);
    assert!(max_abs_diff(z.row(1), &expect([1.0, 2.0], 0.3, 4.0)) < 1e-15);
    assert!(max_abs_diff(z.row(2), &expect([3.0, 4.0], 1.1, 2.0)) < 1e-15);
}

#[test]
fn entity_matrix_time_blocks_encode_timespans() {
    // node 2 before t = 5: events at 2, 3 and 4
    let g = four_node_graph();
    let sample = g
        .temporal_neighborhood(2, 5.0, &NeighborQuery::new(10, SamplingStrategy::MostRecent), 0)
        .unwrap();
    let enc = tgat::time_encoding::TimeEncoder::new(vec![0.2, 0.7, 1.9]).unwrap();
    let mut tape = Tape::new();
    let omega = tape.constant(Matrix::row_vector(enc.frequencies().to_vec()));
    let target = tape.constant(Matrix::row_vector(vec![0.0, 0.0]));
    let hidden: Vec<_> = (0..3).map(|_| tape.constant(Matrix::zeros(1, 2))).collect();
    let z = build_entity_matrix(&mut tape, target, &hidden, &sample, &g, TimeBlock::Functional { omega }, Combine::Concat)
        .unwrap();
    let z = tape.value(z).clone();
    for (row, dt) in [(0, 0.0), (1, 3.0), (2, 2.0), (3, 1.0)] {
        assert!(max_abs_diff(&z.row(row)[3..], &enc.encode(dt)) < 1e-15, "row {row}");
    }

    // events at 1, 2 and 4 seen from t = 5
    let mut b = tgat::graph::GraphBuilder::new(4, 2, 1);
    for (s, d, t) in [(0, 1, 1.0), (0, 2, 2.0), (0, 3, 4.0)] {
        b.push(tgat::graph::TemporalEvent {
            source: s,
            destination: d,
            timestamp: t,
            edge_features: vec![0.0],
            label: None,
        })
        .unwrap();
    }
    let h = b.build();
    let sample = h
        .temporal_neighborhood(0, 5.0, &NeighborQuery::new(10, SamplingStrategy::MostRecent), 0)
        .unwrap();
    let mut tape = Tape::new();
    let omega = tape.constant(Matrix::row_vector(enc.frequencies().to_vec()));
    let target = tape.constant(Matrix::zeros(1, 2));
    let hidden: Vec<_> = (0..3).map(|_| tape.constant(Matrix::zeros(1, 2))).collect();
    let z = build_entity_matrix(&mut tape, target, &hidden, &sample, &h, TimeBlock::Functional { omega }, Combine::Concat)
        .unwrap();
    let z = tape.value(z).clone();
    for (row, dt) in [(1, 4.0), (2, 3.0), (3, 1.0)] {
        assert!(max_abs_diff(&z.row(row)[3..], &enc.encode(dt)) < 1e-15, "row {row}");
    }
}

#[test]
fn positional_rows_use_rank_and_query_takes_last_position() {
    let g = four_node_graph();
    let sample = g
        .temporal_neighborhood(0, 5.5, &NeighborQuery::new(10, SamplingStrategy::MostRecent), 0)
        .unwrap();
    assert_eq!(sample.len(), 3);
    let table = Matrix::from_vec(4, 2, (0..8).map(|i| i as f64).collect()).unwrap();
    let mut tape = Tape::new();
    let t = tape.constant(table.clone());
    let target = tape.constant(Matrix::zeros(1, 2));
    let hidden: Vec<_> = (0..3).map(|_| tape.constant(Matrix::zeros(1, 2))).collect();
    let z = build_entity_matrix(&mut tape, target, &hidden, &sample, &g, TimeBlock::Positional { table: t }, Combine::Concat)
        .unwrap();
    let z = tape.value(z).clone();
    assert_eq!(&z.row(0)[3..], table.row(3));
    for i in 0..3 {
        assert_eq!(&z.row(i + 1)[3..], table.row(i));
    }

    let short = Matrix::zeros(3, 2);
    let mut tape = Tape::new();
    let t = tape.constant(short);
    let target = tape.constant(Matrix::zeros(1, 2));
    let hidden: Vec<_> = (0..3).map(|_| tape.constant(Matrix::zeros(1, 2))).collect();
    let err = build_entity_matrix(&mut tape, target, &hidden, &sample, &g, TimeBlock::Positional { table: t }, Combine::Concat);
    assert!(matches!(err, Err(tgat::Error::Lookup(_))));
}

fn random_head(tape: &mut Tape, width: usize, dh: usize, r: &mut impl Rng) -> BoundHead {
    let mut m = || {
        let data = (0..width * dh).map(|_| r.random_range(-1.0..1.0)).collect();
        tape.constant(Matrix::from_vec(width, dh, data).unwrap())
    };
    BoundHead { w_q: m(), w_k: m(), w_v: m() }
}

#[test]
fn attention_weights_are_a_distribution() {
    let mut r = rng(3);
    for _ in 0..200 {
        let rows = r.random_range(2..12);
        let width = r.random_range(1..6);
        let data = (0..rows * width).map(|_| r.random_range(-5.0..5.0)).collect();
        let mut tape = Tape::new();
        let z = tape.constant(Matrix::from_vec(rows, width, data).unwrap());
        let head = random_head(&mut tape, width, 3, &mut r);
        let (_, w) = attend_head(&mut tape, z, &head, AttentionMode::Learned).unwrap();
        assert_eq!(w.len(), rows - 1);
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn constant_attention_is_mean_of_values() {
    let mut r = rng(4);
    for _ in 0..100 {
        let rows = r.random_range(2..10);
        let width = 4;
        let data: Vec<f64> = (0..rows * width).map(|_| r.random_range(-3.0..3.0)).collect();
        let zm = Matrix::from_vec(rows, width, data).unwrap();
        let mut tape = Tape::new();
        let z = tape.constant(zm.clone());
        let head = random_head(&mut tape, width, 3, &mut r);
        let (h, w) = attend_head(&mut tape, z, &head, AttentionMode::Constant).unwrap();
        let wv = tape.value(head.w_v).clone();
        let mut mean = vec![0.0; 3];
        for i in 1..rows {
            for (m, v) in mean.iter_mut().zip(vec_mat(zm.row(i), &wv)) {
                *m += v / (rows - 1) as f64;
            }
        }
        assert!(max_abs_diff(tape.value(h).data(), &mean) < 1e-12);
        assert!(w.iter().all(|&x| (x - 1.0 / (rows - 1) as f64).abs() < 1e-15));
    }
}

#[test]
fn attention_needs_a_neighbor() {
    let mut tape = Tape::new();
    let z = tape.constant(Matrix::zeros(1, 2));
    let head = random_head(&mut tape, 2, 2, &mut rng(0));
    assert!(attend_head(&mut tape, z, &head, AttentionMode::Learned).is_err());
}

#[test]
fn head_parameter_count_matches_formula() {
    let mut r = rng(8);
    for _ in 0..20 {
        let dims = ModelDims {
            node_dim: r.random_range(1..9),
            edge_dim: r.random_range(0..4),
            embed_dim: r.random_range(1..9),
            time_dim: 2 * r.random_range(1..5),
            head_dim: r.random_range(1..9),
            ffn_dim: r.random_range(1..9),
            heads: r.random_range(1..4),
            layers: 1,
        };
        let init = ModelInit {
            t_max: 10.0,
            max_positions: 4,
            positional_kind: PositionalKind::Fixed,
        };
        let m = TgatModel::new(dims, AttentionMode::Learned, Combine::Concat, init, &mut r).unwrap();
        let d = dims.node_dim + dims.edge_dim;
        let want = (d + dims.time_dim) * dims.head_dim
            + (dims.head_dim + dims.node_dim) * dims.ffn_dim
            + dims.ffn_dim * dims.embed_dim;
        for h in 0..dims.heads {
            assert_eq!(m.layers[0].head_parameter_count(h), want, "{dims:?}");
        }
    }
}

#[test]
fn embedding_ignores_events_at_or_after_query_time() {
    let g = four_node_graph();
    let model = small_model(&g, 2, 2, AttentionMode::Learned, 11);
    // truncating the graph to events strictly before t must not change anything
    let t = 4.0;
    let mut b = tgat::graph::GraphBuilder::new(4, 2, 1);
    for n in 0..4 {
        b.set_node_features(n, g.node_features(n).unwrap()).unwrap();
    }
    for e in 0..g.num_events() {
        if g.timestamp(e) < t {
            let (s, d) = g.endpoints(e);
            b.push(tgat::graph::TemporalEvent {
                source: s,
                destination: d,
                timestamp: g.timestamp(e),
                edge_features: g.edge_features(e).to_vec(),
                label: None,
            })
            .unwrap();
        }
    }
    let h = b.build();
    for node in 0..4 {
        assert_eq!(
            model.embed(&g, node, t, &full_settings()).unwrap(),
            model.embed(&h, node, t, &full_settings()).unwrap()
        );
    }
}
