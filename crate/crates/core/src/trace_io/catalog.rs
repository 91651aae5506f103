use std::io::{Read, Write};
use std::path::Path;

use crate::model::StorageNode;

use super::{line_of, open, parse_f64, TraceIoError, BYTES_PER_MB, BYTES_PER_TB};

pub const CATALOG_HEADER: [&str; 5] = ["name", "capacity_tb", "write_bw_mbs", "read_bw_mbs", "afr"];

/// Nodes with ids assigned in file order. Errors name the first bad line.
pub fn read_catalog<R: Read>(reader: R) -> Result<Vec<StorageNode>, TraceIoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let err = |line: u64, reason: String| TraceIoError::CatalogFormat { line, reason };
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().ne(CATALOG_HEADER) {
        return Err(err(1, format!("header must be {}", CATALOG_HEADER.join(","))));
    }
    let mut nodes = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| err(line_of(e.position()), e.to_string()))?;
        let line = line_of(record.position());
        if record.len() != CATALOG_HEADER.len() {
            return Err(err(line, format!("expected {} fields, found {}", CATALOG_HEADER.len(), record.len())));
        }
        let name = &record[0];
        if name.is_empty() {
            return Err(err(line, "name is empty".into()));
        }
        let num = |i: usize| parse_f64(&record[i], CATALOG_HEADER[i]).map_err(|r| err(line, r));
        let (cap_tb, wbw, rbw, afr) = (num(1)?, num(2)?, num(3)?, num(4)?);
        if cap_tb <= 0.0 {
            return Err(err(line, format!("capacity_tb {cap_tb} must be positive")));
        }
        let capacity = (cap_tb * BYTES_PER_TB).round() as u64;
        let node = StorageNode::new(nodes.len(), name, capacity, wbw * BYTES_PER_MB, rbw * BYTES_PER_MB, afr)
            .map_err(|e| err(line, e.to_string()))?;
        nodes.push(node);
    }
    if nodes.is_empty() {
        return Err(err(1, "catalog has no nodes".into()));
    }
    Ok(nodes)
}

pub fn load_catalog(path: &Path) -> Result<Vec<StorageNode>, TraceIoError> {
    read_catalog(open(path)?)
}

pub fn write_catalog<W: Write>(writer: W, nodes: &[StorageNode]) -> Result<(), TraceIoError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(CATALOG_HEADER)?;
    for n in nodes {
        w.write_record([
            n.name.clone(),
            (n.capacity as f64 / BYTES_PER_TB).to_string(),
            (n.write_bw / BYTES_PER_MB).to_string(),
            (n.read_bw / BYTES_PER_MB).to_string(),
            n.afr.to_string(),
        ])?;
    }
    w.flush().map_err(|source| TraceIoError::Io {
        path: "<catalog>".into(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "name,capacity_tb,write_bw_mbs,read_bw_mbs,afr\nA,14,250,260,0.013\r\nB , 8 , 100.5 , 120 , 0.4\n";

    #[test]
    fn parses_units_and_ids() {
        let nodes = read_catalog(GOOD.as_bytes()).unwrap();
        assert_eq!(nodes.len(), 2);
        assert_eq!(nodes[0].capacity, 14_000_000_000_000);
        assert_eq!(nodes[1].name, "B");
        assert_eq!(nodes[1].write_bw, 100_500_000.0);
        assert_eq!(nodes[1].id.0, 1);
    }

    fn line_of_error(csv: &str) -> u64 {
        match read_catalog(csv.as_bytes()) {
            Err(TraceIoError::CatalogFormat { line, .. }) => line,
            other => panic!("expected CatalogFormat, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let head = "name,capacity_tb,write_bw_mbs,read_bw_mbs,afr\n";
        assert_eq!(line_of_error(&format!("{head}A,14,250,260,1.0\n")), 2);
        assert_eq!(line_of_error(&format!("{head}A,14,250,260,0.1\nB,0,1,1,0.1\n")), 3);
        assert_eq!(line_of_error(&format!("{head}A,14,x,260,0.1\n")), 2);
        assert_eq!(line_of_error(&format!("{head}A,14,250,260\n")), 2);
        assert_eq!(line_of_error("name,cap,w,r,afr\nA,1,1,1,0.1\n"), 1);
        assert_eq!(line_of_error(head), 1);
    }

    #[test]
    fn round_trip() {
        let nodes = read_catalog(GOOD.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_catalog(&mut buf, &nodes).unwrap();
        assert_eq!(read_catalog(buf.as_slice()).unwrap(), nodes);
    }
}
