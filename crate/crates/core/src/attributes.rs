//! Sensitive-attribute distributions.
//!
//! Each node carries a nonnegative row made of one block per sensitive
//! attribute. At the finest level every block is one-hot; a supernode's row is
//! the element-wise sum of its children's rows, so each block of a supernode
//! counts how many original nodes hold each value.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One sensitive attribute and the column span it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeBlock {
    pub name: String,
    pub values: Vec<String>,
    pub offset: usize,
}

impl AttributeBlock {
    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.values.len()
    }
}

/// Attribute name and its admissible values, in column order.
pub type Schema = Vec<(String, Vec<String>)>;

/// Per-node attribute values as read from a table, keyed by node id.
#[derive(Debug, Clone, Default)]
pub struct AttributeTable {
    pub attributes: Vec<String>,
    pub rows: HashMap<String, Vec<String>>,
    /// Node ids in file order.
    pub order: Vec<String>,
}

impl AttributeTable {
    /// Distinct values per attribute in order of first appearance.
    pub fn infer_schema(&self) -> Schema {
        let mut schema: Schema = self
            .attributes
            .iter()
            .map(|a| (a.clone(), Vec::new()))
            .collect();
        for node in &self.order {
            for (k, value) in self.rows[node].iter().enumerate() {
                if !schema[k].1.contains(value) {
                    schema[k].1.push(value.clone());
                }
            }
        }
        schema
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    blocks: Vec<AttributeBlock>,
}

impl AttributeMatrix {
    /// Wraps raw row-major data. Entries must be nonnegative and finite.
    pub fn from_rows(blocks: Vec<AttributeBlock>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = blocks.iter().map(AttributeBlock::width).sum();
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in &rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::Config(format!("attribute row {row:?} has negative or non-finite entries")));
            }
            data.extend_from_slice(row);
        }
        Ok(AttributeMatrix {
            rows: rows.len(),
            width,
            data,
            blocks,
        })
    }

    /// A single categorical attribute given as integer codes in `0..values`.
    pub fn from_codes(name: &str, codes: &[usize], values: usize) -> Result<Self> {
        let block = AttributeBlock {
            name: name.to_string(),
            values: (0..values).map(|v| v.to_string()).collect(),
            offset: 0,
        };
        let rows = codes
            .iter()
            .map(|&c| {
                if c >= values {
                    return Err(Error::UnknownValue {
                        attribute: name.to_string(),
                        value: c.to_string(),
                    });
                }
                let mut r = vec![0.0; values];
                r[c] = 1.0;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(vec![block], rows)
    }

    pub fn node_count(&self) -> usize {
        self.rows
    }

    /// Total number of value columns `M`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn blocks(&self) -> &[AttributeBlock] {
        &self.blocks
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.width..(u + 1) * self.width]
    }

    /// Per-column totals.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.width];
        for u in 0..self.rows {
            for (s, x) in sums.iter_mut().zip(self.row(u)) {
                *s += x;
            }
        }
        sums
    }

    /// Index of the dominant value of `block` for every node. For one-hot rows
    /// this is the node's value; ties go to the lower column.
    pub fn group_codes(&self, block: usize) -> Vec<usize> {
        let cols = self.blocks[block].columns();
        (0..self.rows)
            .map(|u| {
                let r = &self.row(u)[cols.clone()];
                let mut best = 0;
                for (k, &x) in r.iter().enumerate() {
                    if x > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Rows merged according to `parent`, which maps each row to one of
    /// `n_parents` output rows.
    pub fn merge_by(&self, parent: &[usize], n_parents: usize) -> AttributeMatrix {
        let mut data = vec![0.0; n_parents * self.width];
        for (u, &p) in parent.iter().enumerate() {
            let dst = &mut data[p * self.width..(p + 1) * self.width];
            for (d, s) in dst.iter_mut().zip(self.row(u)) {
                *d += s;
            }
        }
        AttributeMatrix {
            rows: n_parents,
            width: self.width,
            data,
            blocks: self.blocks.clone(),
        }
    }

    /// Every row divided by its L1 mass, as a dense `N x M` matrix.
    pub fn row_normalized(&self) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.width);
        for u in 0..self.rows {
            let r = row_normalize(self.row(u)).map_err(|_| Error::ZeroMass(u))?;
            for (j, x) in r.into_iter().enumerate() {
                out[(u, j)] = x;
            }
        }
        Ok(out)
    }

    /// Rows reordered so that output row `i` is input row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> AttributeMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        AttributeMatrix {
            rows: perm.len(),
            width: self.width,
            data,
            blocks: self.blocks.clone(),
        }
    }
}

/// Concatenated one-hot encoding. Row `i` corresponds to `nodes[i]`.
pub fn encode_one_hot<S: AsRef<str>>(
    nodes: &[S],
    table: &AttributeTable,
    schema: &Schema,
) -> Result<AttributeMatrix> {
    let mut blocks = Vec::with_capacity(schema.len());
    let mut offset = 0;
    for (name, values) in schema {
        blocks.push(AttributeBlock {
            name: name.clone(),
            values: values.clone(),
            offset,
        });
        offset += values.len();
    }
    let column_of: Vec<usize> = schema
        .iter()
        .map(|(name, _)| {
            table
                .attributes
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::Config(format!("attribute {name:?} missing from table")))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(nodes.len());
    for node in nodes {
        let node = node.as_ref();
        let assignment = table
            .rows
            .get(node)
            .ok_or_else(|| Error::MissingNode(node.to_string()))?;
        let mut row = vec![0.0; offset];
        for (block, &col) in blocks.iter().zip(&column_of) {
            let value = &assignment[col];
            let k = block
                .values
                .iter()
                .position(|v| v == value)
                .ok_or_else(|| Error::UnknownValue {
                    attribute: block.name.clone(),
                    value: value.clone(),
                })?;
            row[block.offset + k] = 1.0;
        }
        rows.push(row);
    }
    AttributeMatrix::from_rows(blocks, rows)
}

/// Element-wise sum of two attribute rows.
pub fn merge_rows(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
}

/// L1 normalization of a single row.
pub fn row_normalize(row: &[f64]) -> Result<Vec<f64>> {
    let mass: f64 = row.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass(0));
    }
    Ok(row.iter().map(|x| x / mass).collect())
}

/// Attribute divergence in `[0, 1]`: `1 - 1 / (1 + KL(p || q))` where `p` and
/// `q` are the L1-normalized rows. Returns exactly 1 when `p` puts mass where
/// `q` has none.
pub fn divergence(su: &[f64], sv: &[f64]) -> Result<f64> {
    if su.len() != sv.len() {
        return Err(Error::DimensionMismatch {
            expected: su.len(),
            got: sv.len(),
        });
    }
    let mu: f64 = su.iter().sum();
    let mv: f64 = sv.iter().sum();
    if !(mu > 0.0) || !(mv > 0.0) {
        return Err(Error::ZeroMass(0));
    }
    let mut kl = 0.0;
    for (&a, &b) in su.iter().zip(sv) {
        if a <= 0.0 {
            continue;
        }
        if b <= 0.0 {
            return Ok(1.0);
        }
        let (p, q) = (a / mu, b / mv);
        kl += p * (p / q).ln();
    }
    // Rounding can leave KL a hair below zero for identical distributions.
    let kl = kl.max(0.0);
    Ok(1.0 - 1.0 / (1.0 + kl))
}

/// Reads a categorical attribute table: header `node,attr1,attr2,...`.
pub fn read_attribute_table<R: Read>(reader: R) -> Result<AttributeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "attribute table needs `node` plus at least one attribute column".into(),
        });
    }
    let attributes: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut table = AttributeTable {
        attributes,
        ..Default::default()
    };
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let node = record[0].to_string();
        let values: Vec<String> = record.iter().skip(1).map(str::to_string).collect();
        if table.rows.insert(node.clone(), values).is_some() {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("duplicate node {node:?}"),
            });
        }
        table.order.push(node);
    }
    Ok(table)
}

/// Reads an explicit schema file: one attribute per line, `name: v1,v2,...`.
pub fn read_schema<R: Read>(mut reader: R) -> Result<Schema> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut schema = Schema::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, values) = line.split_once(':').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected `name: v1,v2,...`".into(),
        })?;
        let values = values.split(',').map(|v| v.trim().to_string()).collect();
        schema.push((name.trim().to_string(), values));
    }
    Ok(schema)
}

/// Writes per-node distributions with header `node,attr=value,...`.
pub fn write_distribution_csv<W: Write, S: AsRef<str>>(
    s: &AttributeMatrix,
    names: &[S],
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string()];
    for b in s.blocks() {
        for v in &b.values {
            header.push(format!("{}={}", b.name, v));
        }
    }
    wtr.write_record(&header)?;
    for u in 0..s.node_count() {
        let mut rec = vec![names[u].as_ref().to_string()];
        rec.extend(s.row(u).iter().map(|x| x.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the format written by [`write_distribution_csv`]. Returns node ids in
/// file order alongside the matrix.
pub fn read_distribution_csv<R: Read>(reader: R) -> Result<(Vec<String>, AttributeMatrix)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut blocks: Vec<AttributeBlock> = Vec::new();
    for (j, col) in header.iter().skip(1).enumerate() {
        let (attr, value) = col.split_once('=').ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("column {col:?} is not `attr=value`"),
        })?;
        match blocks.last_mut() {
            Some(b) if b.name == attr => b.values.push(value.to_string()),
            _ => blocks.push(AttributeBlock {
                name: attr.to_string(),
                values: vec![value.to_string()],
                offset: j,
            }),
        }
    }
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        names.push(record[0].to_string());
        let row = record
            .iter()
            .skip(1)
            .map(|x| {
                x.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 2,
                    msg: format!("bad count {x:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((names, AttributeMatrix::from_rows(blocks, rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gender_race() -> (AttributeTable, Schema) {
        let text = "node,gender,race\nu,F,African\nv,M,Asian\nw,F,African\n";
        let table = read_attribute_table(text.as_bytes()).unwrap();
        let schema = vec![
            ("gender".to_string(), vec!["F".into(), "M".into()]),
            (
                "race".to_string(),
                vec!["African".into(), "Asian".into(), "White".into()],
            ),
        ];
        (table, schema)
    }

    #[test]
    fn one_hot_female_african() {
        let (table, schema) = gender_race();
        let s = encode_one_hot(&["u", "v", "w"], &table, &schema).unwrap();
        assert_eq!(s.row(0), &[1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.row(0), s.row(2));
        assert_eq!(s.width(), 5);
        assert_eq!(s.blocks()[1].columns(), 2..5);
    }

    #[test]
    fn one_hot_single_binary() {
        let s = AttributeMatrix::from_codes("s", &[1], 2).unwrap();
        assert_eq!(s.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn one_hot_errors() {
        let (table, schema) = gender_race();
        assert!(matches!(
            encode_one_hot(&["u", "nobody"], &table, &schema),
            Err(Error::MissingNode(_))
        ));
        let narrow = vec![("gender".to_string(), vec!["F".into()])];
        assert!(matches!(
            encode_one_hot(&["v"], &table, &narrow),
            Err(Error::UnknownValue { .. })
        ));
    }

    #[test]
    fn inferred_schema_uses_first_appearance() {
        let (table, _) = gender_race();
        let schema = table.infer_schema();
        assert_eq!(schema[0].1, vec!["F", "M"]);
        assert_eq!(schema[1].1, vec!["African", "Asian"]);
    }

    #[test]
    fn merging_rows() {
        let (table, schema) = gender_race();
        let s = encode_one_hot(&["u", "v"], &table, &schema).unwrap();
        assert_eq!(merge_rows(s.row(0), s.row(1)).unwrap(), vec![1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(
            merge_rows(&[1.0, 0.0, 1.0, 0.0, 0.0], &[0.0, 1.0, 1.0, 0.0, 0.0]).unwrap(),
            vec![1.0, 1.0, 2.0, 0.0, 0.0]
        );
        assert!(merge_rows(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn normalizing_rows() {
        assert_eq!(
            row_normalize(&[1.0, 1.0, 2.0, 0.0, 0.0]).unwrap(),
            vec![0.25, 0.25, 0.5, 0.0, 0.0]
        );
        assert_eq!(row_normalize(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(row_normalize(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert!(row_normalize(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(divergence(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        // Oracle: KL over p = (1/2, 1/2), q = (1/4, 3/4), written out by hand.
        let kl = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let expect = 1.0 - 1.0 / (1.0 + kl);
        let got = divergence(&[1.0, 1.0], &[1.0, 3.0]).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.1257).abs() < 1e-4);
        assert!(divergence(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn divergence_is_oriented() {
        // q lacks support where p has mass in one direction only.
        assert_eq!(divergence(&[1.0, 1.0], &[2.0, 0.0]).unwrap(), 1.0);
        let back = divergence(&[2.0, 0.0], &[1.0, 1.0]).unwrap();
        let expect = 1.0 - 1.0 / (1.0 + 2f64.ln());
        assert!((back - expect).abs() < 1e-15);
    }

    #[test]
    fn distribution_csv_round_trip() {
        let (table, schema) = gender_race();
        let s = encode_one_hot(&["u", "v", "w"], &table, &schema).unwrap();
        let merged = s.merge_by(&[0, 0, 1], 2);
        let mut buf = Vec::new();
        write_distribution_csv(&merged, &["a", "b"], &mut buf).unwrap();
        let (names, back) = read_distribution_csv(buf.as_slice()).unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(back, merged);
    }

    #[test]
    fn schema_file() {
        let schema = read_schema("gender: F, M\n# c\nrace: A,B,C\n".as_bytes()).unwrap();
        assert_eq!(schema[0], ("gender".into(), vec!["F".into(), "M".into()]));
        assert_eq!(schema[1].1.len(), 3);
    }

    fn row(m: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..5.0, m)
            .prop_filter("positive mass", |r| r.iter().sum::<f64>() > 1e-9)
    }

    proptest! {
        #[test]
        fn divergence_in_unit_interval(a in row(5), b in row(5)) {
            let phi = divergence(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&phi));
            prop_assert_eq!(divergence(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn merge_is_associative_and_commutative(a in row(4), b in row(4), c in row(4)) {
            let ab = merge_rows(&a, &b).unwrap();
            prop_assert_eq!(&ab, &merge_rows(&b, &a).unwrap());
            let left = merge_rows(&ab, &c).unwrap();
            let right = merge_rows(&a, &merge_rows(&b, &c).unwrap()).unwrap();
            for (x, y) in left.iter().zip(&right) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
