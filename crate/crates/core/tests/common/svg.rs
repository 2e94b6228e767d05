/// Byte ranges of the element children of every `<defs>`.
pub fn defs_children(text: &str) -> Vec<Vec<std::ops::Range<usize>>> {
    let doc = roxmltree::Document::parse(text).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("defs"))
        .map(|d| d.children().filter(|c| c.is_element()).map(|c| c.range()).collect())
        .collect()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Rewrites `text` with the children of each `<defs>` reordered by `orders`.
pub fn reorder(text: &str, groups: &[Vec<std::ops::Range<usize>>], orders: &[Vec<usize>]) -> String {
    let mut edits: Vec<(std::ops::Range<usize>, String)> = Vec::new();
    for (g, order) in groups.iter().zip(orders) {
        if g.is_empty() {
            continue;
        }
        let span = g[0].start..g[g.len() - 1].end;
        let body: Vec<&str> = order.iter().map(|&i| &text[g[i].clone()]).collect();
        edits.push((span, body.join("\n")));
    }
    let mut out = text.to_string();
    edits.sort_by_key(|e| std::cmp::Reverse(e.0.start));
    for (span, body) in edits {
        out.replace_range(span, &body);
    }
    out
}

/// Parses every reordering of each `<defs>` group (others held fixed) plus all
/// groups reversed together. Returns the number of variants parsed and the
/// descriptions of those that differ from the document order.
pub fn defs_permutation_mismatches(text: &str) -> (usize, Vec<String>) {
    let reference = vecstyle::scene::parse_svg(text.as_bytes()).unwrap();
    let groups = defs_children(text);
    let mut orders_to_try: Vec<Vec<Vec<usize>>> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for p in permutations(g.len()) {
            orders_to_try.push(
                groups
                    .iter()
                    .enumerate()
                    .map(|(j, h)| if j == gi { p.clone() } else { (0..h.len()).collect() })
                    .collect(),
            );
        }
    }
    orders_to_try.push(groups.iter().map(|g| (0..g.len()).rev().collect()).collect());
    let mut bad = Vec::new();
    for orders in &orders_to_try {
        let shuffled = reorder(text, &groups, orders);
        match vecstyle::scene::parse_svg(shuffled.as_bytes()) {
            Ok(s) if s == reference => {}
            Ok(_) => bad.push(format!("{orders:?}: different scene")),
            Err(e) => bad.push(format!("{orders:?}: {e}")),
        }
    }
    (orders_to_try.len(), bad)
}
