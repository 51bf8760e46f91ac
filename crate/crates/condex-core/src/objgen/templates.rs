//! Parsers for the embedded shape template assets.

use std::sync::OnceLock;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Bar {
    pub row: usize,
    pub col: usize,
    pub vertical: bool,
    pub len: usize,
}

impl Bar {
    /// Cells covered by the bar, in scan order along its axis.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len).map(move |i| {
            if self.vertical {
                (self.row + i, self.col)
            } else {
                (self.row, self.col + i)
            }
        })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LetterTemplate {
    pub id: u32,
    pub name: String,
    pub bars: Vec<Bar>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct BottleTemplate {
    pub id: u32,
    pub name: String,
    /// True when region 'A' is the heavy side.
    pub heavy_a: bool,
    pub rows: usize,
    pub cols: usize,
    /// Row-major region mask: 0 empty, 1 region A, 2 region B.
    pub mask: Vec<u8>,
}

static LETTERS: OnceLock<Vec<LetterTemplate>> = OnceLock::new();
static BOTTLES: OnceLock<Vec<BottleTemplate>> = OnceLock::new();

pub(crate) fn letter_templates() -> &'static [LetterTemplate] {
    LETTERS.get_or_init(|| parse_letters(include_str!("../../assets/letters.txt")))
}

pub(crate) fn bottle_templates() -> &'static [BottleTemplate] {
    BOTTLES.get_or_init(|| parse_bottles(include_str!("../../assets/bottles.txt")))
}

// The assets are compiled in, so malformed data is a build defect; panic with
// a pointed message rather than threading Result through every generator.
fn parse_letters(src: &str) -> Vec<LetterTemplate> {
    let mut out: Vec<LetterTemplate> = Vec::new();
    for (lineno, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next().unwrap() {
            "category" => {
                let id: u32 = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .unwrap_or_else(|| panic!("letters.txt:{}: bad category id", lineno + 1));
                let name = tok
                    .next()
                    .unwrap_or_else(|| panic!("letters.txt:{}: missing name", lineno + 1));
                assert_eq!(
                    id as usize,
                    out.len(),
                    "letters.txt:{}: category ids must be dense and ordered",
                    lineno + 1
                );
                out.push(LetterTemplate {
                    id,
                    name: name.to_string(),
                    bars: Vec::new(),
                    rows: 0,
                    cols: 0,
                });
            }
            "bar" => {
                let nums: Vec<&str> = tok.collect();
                assert_eq!(nums.len(), 4, "letters.txt:{}: bar wants 4 fields", lineno + 1);
                let bar = Bar {
                    row: nums[0].parse().expect("bar row"),
                    col: nums[1].parse().expect("bar col"),
                    vertical: match nums[2] {
                        "v" => true,
                        "h" => false,
                        other => panic!("letters.txt:{}: bad axis {other:?}", lineno + 1),
                    },
                    len: nums[3].parse().expect("bar len"),
                };
                assert!(bar.len >= 1, "letters.txt:{}: empty bar", lineno + 1);
                let tpl = out
                    .last_mut()
                    .unwrap_or_else(|| panic!("letters.txt:{}: bar before category", lineno + 1));
                for (r, c) in bar.cells() {
                    tpl.rows = tpl.rows.max(r + 1);
                    tpl.cols = tpl.cols.max(c + 1);
                }
                tpl.bars.push(bar);
            }
            other => panic!("letters.txt:{}: unknown directive {other:?}", lineno + 1),
        }
    }
    assert!(!out.is_empty(), "letters.txt defines no categories");
    for tpl in &out {
        assert!(!tpl.bars.is_empty(), "category {} has no bars", tpl.id);
    }
    out
}

fn parse_bottles(src: &str) -> Vec<BottleTemplate> {
    let mut out: Vec<BottleTemplate> = Vec::new();
    let mut in_mask = false;
    for (lineno, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            in_mask = false;
            continue;
        }
        if let Some(rest) = line.strip_prefix("template ") {
            let mut tok = rest.split_whitespace();
            let id: u32 = tok
                .next()
                .and_then(|t| t.parse().ok())
                .unwrap_or_else(|| panic!("bottles.txt:{}: bad template id", lineno + 1));
            let name = tok
                .next()
                .unwrap_or_else(|| panic!("bottles.txt:{}: missing name", lineno + 1));
            let heavy = tok
                .next()
                .and_then(|t| t.strip_prefix("heavy="))
                .unwrap_or_else(|| panic!("bottles.txt:{}: missing heavy=", lineno + 1));
            assert_eq!(
                id as usize,
                out.len(),
                "bottles.txt:{}: template ids must be dense and ordered",
                lineno + 1
            );
            out.push(BottleTemplate {
                id,
                name: name.to_string(),
                heavy_a: match heavy {
                    "A" => true,
                    "B" => false,
                    other => panic!("bottles.txt:{}: bad heavy region {other:?}", lineno + 1),
                },
                rows: 0,
                cols: 0,
                mask: Vec::new(),
            });
            in_mask = true;
        } else if in_mask {
            let tpl = out.last_mut().unwrap();
            let row: Vec<u8> = line
                .chars()
                .map(|ch| match ch {
                    '.' => 0,
                    'A' => 1,
                    'B' => 2,
                    other => panic!("bottles.txt:{}: bad mask char {other:?}", lineno + 1),
                })
                .collect();
            if tpl.rows == 0 {
                tpl.cols = row.len();
            } else {
                assert_eq!(
                    row.len(),
                    tpl.cols,
                    "bottles.txt:{}: ragged mask row",
                    lineno + 1
                );
            }
            tpl.rows += 1;
            tpl.mask.extend(row);
        } else {
            panic!("bottles.txt:{}: mask row outside template", lineno + 1);
        }
    }
    assert!(!out.is_empty(), "bottles.txt defines no templates");
    for tpl in &out {
        let a = tpl.mask.iter().filter(|&&m| m == 1).count();
        let b = tpl.mask.iter().filter(|&&m| m == 2).count();
        assert!(a > 0 && b > 0, "template {} lacks a region", tpl.id);
    }
    out
}
