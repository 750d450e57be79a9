use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use evocaptcha_core::challenge::{
    generate_challenge, generate_dataset, load_manifest, random_answer, rasterize, rng_for, ChallengeError,
    DatasetCosts, GenConfig, LayoutPolicy, RasterSpec,
};
use evocaptcha_core::figlet::{bundled_fonts_dir, load_font_dir, render, AsciiArt, FigletFont, LayoutMode};
use evocaptcha_core::scoring::grade;
use proptest::prelude::*;

fn fonts() -> &'static [FigletFont] {
    static FONTS: OnceLock<Vec<FigletFont>> = OnceLock::new();
    FONTS.get_or_init(|| load_font_dir(&bundled_fonts_dir()).unwrap().fonts)
}

fn png_size(bytes: &[u8]) -> (u32, u32) {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let reader = decoder.read_info().unwrap();
    let info = reader.info();
    (info.width, info.height)
}

fn art(lines: Vec<String>) -> AsciiArt {
    AsciiArt { lines, answer_len: 1, font_name: "test".into() }
}

#[test]
fn answer_lengths_are_uniform() {
    let cfg = GenConfig::default();
    let mut rng = rng_for(11, 0);
    let mut counts = [0usize; 16];
    let draws = 10_000;
    for _ in 0..draws {
        let a = random_answer(&mut rng, &cfg).unwrap();
        counts[a.len()] += 1;
    }
    for (len, &count) in counts.iter().enumerate().skip(7) {
        let freq = count as f64 / draws as f64;
        assert!((freq - 1.0 / 9.0).abs() <= 0.02, "length {len}: {freq}");
    }
    assert_eq!(counts[..7].iter().sum::<usize>(), 0);
}

#[test]
fn characters_are_uniform_over_charset() {
    let cfg = GenConfig::default();
    let charset = cfg.effective_charset();
    let mut rng = rng_for(12, 0);
    let mut counts: HashMap<char, usize> = HashMap::new();
    let mut total = 0;
    for _ in 0..5_000 {
        for c in random_answer(&mut rng, &cfg).unwrap().chars() {
            *counts.entry(c).or_default() += 1;
            total += 1;
        }
    }
    assert_eq!(counts.len(), charset.len());
    let expected = total as f64 / charset.len() as f64;
    let chi2: f64 = counts.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    // 30 degrees of freedom; the 0.999 quantile is about 59.7.
    assert!(chi2 < 59.7, "chi-square {chi2}");
}

#[test]
fn generation_is_deterministic() {
    let cfg = GenConfig::default();
    let three = &fonts()[..3];
    let a = generate_challenge(&mut rng_for(42, 0), three, &cfg, None).unwrap();
    let b = generate_challenge(&mut rng_for(42, 0), three, &cfg, None).unwrap();
    assert_eq!((&a.id, &a.answer, &a.font_name), (&b.id, &b.answer, &b.font_name));
    assert_eq!(a.art, b.art);
    let c = generate_challenge(&mut rng_for(42, 1), three, &cfg, None).unwrap();
    assert_ne!(a.id, c.id);
    assert_eq!(a.id.len(), 32);
}

#[test]
fn single_glyph_challenge() {
    let font = fonts().iter().find(|f| f.name() == "standard").unwrap();
    let cfg = GenConfig {
        min_len: 1,
        max_len: 1,
        charset: "X".into(),
        layout: LayoutPolicy::Fixed(LayoutMode::FullWidth),
        ..GenConfig::default()
    };
    let ch = generate_challenge(&mut rng_for(0, 0), std::slice::from_ref(font), &cfg, None).unwrap();
    assert_eq!(ch.answer, "X");
    let glyph: Vec<String> = font.glyph('X').unwrap().lines().iter().map(|l| l.replace('$', " ")).collect();
    let width = glyph.iter().map(|l| l.len()).max().unwrap();
    let padded: Vec<String> = glyph.iter().map(|l| format!("{l:width$}")).collect();
    assert_eq!(ch.art.lines, padded);
}

#[test]
fn empty_font_list_is_an_error() {
    let err = generate_challenge(&mut rng_for(0, 0), &[], &GenConfig::default(), None).unwrap_err();
    assert!(matches!(err, ChallengeError::EmptyFontList));
}

#[test]
fn font_choice_is_uniform() {
    let cfg = GenConfig::default();
    for subset in [&fonts()[..3], fonts()] {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let n = 10_000;
        for i in 0..n {
            let ch = generate_challenge(&mut rng_for(3, i), subset, &cfg, None).unwrap();
            *counts.entry(ch.font_name).or_default() += 1;
        }
        let target = 1.0 / subset.len() as f64;
        assert_eq!(counts.len(), subset.len());
        for (name, c) in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - target).abs() <= 0.03, "{name}: {freq}");
        }
    }
}

#[test]
fn ground_truth_passes_its_own_challenge() {
    let cfg = GenConfig::default();
    for i in 0..200 {
        let ch = generate_challenge(&mut rng_for(8, i), fonts(), &cfg, None).unwrap();
        assert!(grade(&ch.answer, &ch.answer).unwrap().passed);
    }
}

#[test]
fn bundled_fonts_cover_default_charset() {
    GenConfig::default().check_fonts(fonts()).unwrap();
}

#[test]
fn raster_geometry() {
    let spec = RasterSpec::default();
    let blank = rasterize(&art(vec![" ".into()]), &spec).unwrap();
    assert_eq!(png_size(&blank), (3 * 8, 3 * 16));

    let big = art((0..6).map(|i| format!("{:<40}", "#".repeat(i + 1))).collect());
    let spec = RasterSpec { scale: 2, ..RasterSpec::default() };
    let png = rasterize(&big, &spec).unwrap();
    assert_eq!(png_size(&png), (672, 256));
    assert_eq!(png, rasterize(&big, &spec).unwrap());

    let odd = RasterSpec { cell_width: 5, cell_height: 9, scale: 3, ..RasterSpec::default() };
    assert_eq!(png_size(&rasterize(&big, &odd).unwrap()), (42 * 15, 8 * 27));
}

#[test]
fn raster_pixels_are_ink_on_paper() {
    let png = rasterize(&art(vec!["#".into()]), &RasterSpec::default()).unwrap();
    let mut reader = png::Decoder::new(std::io::Cursor::new(png)).read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    reader.next_frame(&mut buf).unwrap();
    let (w, h) = (24usize, 48usize);
    assert!(buf.iter().all(|p| *p == 0 || *p == 255));
    for y in 0..h {
        for x in 0..w {
            let in_cell = (8..16).contains(&x) && (16..32).contains(&y);
            if !in_cell {
                assert_eq!(buf[y * w + x], 255, "margin pixel ({x},{y})");
            }
        }
    }
    assert!(buf.contains(&0));
}

#[test]
fn dataset_single_entry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenConfig { seed: 1, ..GenConfig::default() };
    let m = generate_dataset(1, fonts(), &cfg, dir.path(), Some(&RasterSpec::default())).unwrap();
    assert_eq!(m.entries.len(), 1);
    let e = &m.entries[0];
    let text = m.read_text(dir.path(), e).unwrap();
    let font = fonts().iter().find(|f| f.name() == e.font_name).unwrap();
    assert_eq!(text, render(font, &e.answer, font.default_layout()).unwrap().to_text());
    assert!(m.read_image(dir.path(), e).unwrap().is_some());
    let costs = DatasetCosts::load(dir.path()).unwrap();
    assert_eq!(costs.samples, 1);
    assert!(costs.mean_image_seconds.is_some());
}

#[test]
fn dataset_of_500_is_complete_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = GenConfig { seed: 500, ..GenConfig::default() };
    let m1 = generate_dataset(500, fonts(), &cfg, a.path(), None).unwrap();
    let m2 = generate_dataset(500, fonts(), &cfg, b.path(), None).unwrap();
    assert_eq!(m1.entries, m2.entries);

    assert_eq!(m1.entries.len(), 500);
    let ids: HashSet<&str> = m1.entries.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids.len(), 500);
    for e in &m1.entries {
        assert!(a.path().join(&e.text_path).is_file());
        assert!(e.image_path.is_none());
        assert!((7..=15).contains(&e.answer.len()));
    }

    let strip = |dir: &std::path::Path| {
        let mut v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("created_at");
        serde_json::to_vec(&v).unwrap()
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    assert_eq!(load_manifest(a.path()).unwrap(), m1);
    for e in &m1.entries {
        assert_eq!(
            std::fs::read(a.path().join(&e.text_path)).unwrap(),
            std::fs::read(b.path().join(&e.text_path)).unwrap()
        );
    }
}

#[test]
fn dataset_rejects_zero_and_unrenderable() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        generate_dataset(0, fonts(), &GenConfig::default(), dir.path(), None),
        Err(ChallengeError::InvalidConfig(_))
    ));
    let cfg = GenConfig { charset: "AB\u{e9}".into(), ..GenConfig::default() };
    assert!(matches!(
        generate_dataset(1, fonts(), &cfg, dir.path(), None),
        Err(ChallengeError::UnrenderableCharset { ch: '\u{e9}', .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_then_rasterize_never_fails(seed in any::<u64>(), idx in 0u64..1000) {
        let cfg = GenConfig::default();
        let ch = generate_challenge(&mut rng_for(seed, idx), fonts(), &cfg, Some(&RasterSpec::default())).unwrap();
        let png = ch.image.unwrap();
        prop_assert_eq!(png_size(&png), (((ch.art.width() + 2) * 8) as u32, ((ch.art.height() + 2) * 16) as u32));
        prop_assert!(ch.answer.chars().all(|c| cfg.effective_charset().contains(&c)));
    }
}
