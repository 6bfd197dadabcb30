use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use padic_cells::cells::{check_partition, refine_common, Ball};
use padic_cells::decompose::{decompose_set, prepare};
use padic_cells::oracle::{count_roots_mod, verify_laws, verify_partition};
use padic_cells::padic::Prime;
use padic_cells::par::{set_execution, Execution};
use padic_cells::parse::{parse_formula, parse_poly};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn modes(c: &mut Criterion, name: &str, mut run: impl FnMut()) {
    let mut group = c.benchmark_group(name);
    group.sample_size(20);
    for (label, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            set_execution(mode);
            b.iter(&mut run)
        });
    }
    group.finish();
    set_execution(Execution::Parallel);
}

fn benches(c: &mut Criterion) {
    let p = Prime::new(7).unwrap();
    let quartic = parse_poly("y^4 + y^3 - 7*y^2 - y + 6").unwrap();
    let other = parse_poly("y^4 - 18").unwrap();
    let a = prepare(&quartic, p, &Ball::zp()).unwrap();
    let b = prepare(&other, p, &Ball::zp()).unwrap();
    let refined = refine_common(&a, &b).unwrap();

    modes(c, "count_roots_mod/p7_k6", || {
        black_box(count_roots_mod(&quartic, p, 6).unwrap());
    });
    modes(c, "verify_laws/200", || {
        black_box(verify_laws(&a, &quartic, 200));
    });
    modes(c, "verify_partition/k6", || {
        black_box(verify_partition(&refined, 6));
    });
    modes(c, "refine_common", || {
        black_box(refine_common(&a, &b).unwrap());
    });
    modes(c, "check_partition", || {
        black_box(check_partition(&refined).unwrap());
    });
    let phi = parse_formula("ord(y^2 - 2) >= 2 & (ac(1, y^3 - y) = 1 | ord(y - 3) % 2 = 0)").unwrap();
    modes(c, "decompose_set", || {
        black_box(decompose_set(&phi, p, &Ball::zp()).unwrap());
    });
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
