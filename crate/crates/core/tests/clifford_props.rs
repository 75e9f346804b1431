use num_rational::Rational64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torsionlab::clifford::*;

fn shape_strategy() -> impl Strategy<Value = AlgebraShape> {
    (1usize..=3, 0usize..=2).prop_map(|(n, k)| AlgebraShape::new(n, k).unwrap())
}

fn generators(shape: &AlgebraShape) -> Vec<Generator> {
    let mut g: Vec<Generator> = (1..=shape.n()).map(Generator::Base).collect();
    g.extend((1..=shape.k()).map(Generator::Fiber));
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn berezin_identity_holds(shape in shape_strategy(), seed in any::<u64>(), terms in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_expansion(shape, terms, &mut rng);
        let lhs = a.operator().supertrace();
        let rhs = top_supertrace(&shape) * berezin_integral(&a.associated_form().unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn only_the_top_word_survives(shape in shape_strategy(), l in any::<u32>(), r in any::<u32>()) {
        let mask = shape.dim() as u32 - 1;
        let (l, r) = (BasisWord(l & mask), BasisWord(r & mask));
        let st = clifford_word::<i64>(shape, l, r).supertrace();
        if l == shape.top() && r == shape.top() {
            prop_assert_eq!(st, top_supertrace(&shape));
        } else {
            prop_assert_eq!(st, 0);
        }
    }

    #[test]
    fn left_and_right_generators_anticommute(shape in shape_strategy()) {
        let id = ExteriorOperator::<i64>::identity(shape, false).unwrap();
        for a in generators(&shape) {
            for b in generators(&shape) {
                let ca = clifford_left::<i64>(shape, a).unwrap();
                let cb = clifford_left::<i64>(shape, b).unwrap();
                let hb = clifford_right::<i64>(shape, b).unwrap();
                let expected = if a == b { id.scale(&-2) } else { id.scale(&0) };
                prop_assert_eq!(ca.anticommutator(&cb), expected);
                prop_assert!(ca.anticommutator(&hb).is_zero());
            }
        }
    }
}

#[test]
fn star_log_derivatives_for_several_shapes() {
    for (n, k) in [(1, 0), (1, 2), (2, 1), (3, 2)] {
        let s = AlgebraShape::new(n, k).unwrap();
        let num = number_operator::<Rational64>(s, NumberKind::Total);
        let nf = number_operator::<Rational64>(s, NumberKind::Fiber);
        let id = ExteriorOperator::<Rational64>::identity(s, false).unwrap();
        let two = Rational64::from_integer(2);
        let want_t = &num.scale(&two) - &id.scale(&Rational64::from_integer((n + k) as i64));
        let want_v = &nf.scale(&two) - &id.scale(&Rational64::from_integer(k as i64));
        assert_eq!(star_log_derivative_t(s).unwrap(), want_t, "n={n} k={k}");
        assert_eq!(star_log_derivative_vertical(s).unwrap(), want_v, "n={n} k={k}");
    }
}

#[test]
fn double_star_is_graded_sign() {
    for (n, k) in [(1, 2), (2, 2), (3, 1)] {
        let s = AlgebraShape::new(n, k).unwrap();
        let star = flat_hodge_star::<i64>(s);
        let m = s.rank();
        let want = ExteriorOperator::diagonal(s, |w| {
            let p = w.degree();
            if (p * (m - p)).is_multiple_of(2) { 1 } else { -1 }
        });
        assert_eq!(&star * &star, want, "n={n} k={k}");
    }
}
