// debug harness: print iteration reports for the failing scenario
use boostseq::boosting::*;
use boostseq::learners::*;
use boostseq::synth::*;

fn main() {
    let mut c = WorkflowConfig::default_desk();
    c.frame_height = 8; c.frame_width = 8;
    c.sequences = 7; c.learn_count = 4; c.val_count = 2;
    c.phases = 3; c.phase_dwell = (16, 24);
    c.noise_sigma = 0.02; c.occlusion_prob = 0.0;
    c.position_jitter = 0; c.annotator_jitter = 0;
    c.tools.truncate(3);
    c.tools[0].phases = vec![0,1,2]; c.tools[0].home = (3,3); c.tools[0].activation = 0.6; c.tools[0].dwell = (6,12);
    c.tools[1].phases = vec![0]; c.tools[1].home = (4,4); c.tools[1].activation = 0.9; c.tools[1].dwell = (8,14);
    c.tools[2].phases = vec![2]; c.tools[2].home = (4,4); c.tools[2].activation = 0.9; c.tools[2].dwell = (8,14);
    c.tools[2].glyph = c.tools[1].glyph; c.tools[2].hue = c.tools[1].hue;
    c.confusable_pairs = vec![(1,2)];
    let ds = generate(&c, 42).unwrap();
    let make = |split: Split| -> Vec<VideoData<'_>> {
        ds.split(split).into_iter().map(|s| VideoData { id: s.id.clone(), frames: &s.frames, labels: &s.truth }).collect()
    };
    let data = BoostData { learn: make(Split::Learn), val: make(Split::Validation), tools: ds.tools, m: 2 };
    let menus = Menus {
        frame: vec![Architecture::Cnn(CnnSpec { arch: CnnArch::DownsampleDense, height: 8, width: 8, channels: 3, outputs: 3 })],
        sequence: vec![Architecture::Rnn(RnnSpec { cell: RnnCellKind::Gru, layers: 2, width: 8, direction: Direction::Unidirectional, io_width: 3 })],
    };
    let mut cfg = BoostConfig::new(Strategy::Joint, 2);
    cfg.cnn_train.max_epochs = 8; cfg.cnn_train.patience = 3; cfg.cnn_train.batch_size = 16;
    cfg.rnn_train.max_epochs = 200; cfg.rnn_train.patience = 15;
    cfg.stop.max_iterations = 6;
    let state = run_boosting(&data, &menus, &cfg).unwrap();
    for it in &state.iterations {
        println!("iter {} ctx={} accepted={} train={:.3} val={:.3}", it.index, it.context.id(), it.accepted, it.train_loss, it.val_loss);
        for c in &it.candidates {
            println!("   cand {} fam={:?} alpha={:.3} train={:.3} weak_val={:.3} err={:?}", c.id, c.family, c.alpha, c.train_loss, c.weak_val_loss, c.error);
        }
    }
}
