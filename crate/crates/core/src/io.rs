//! CSV readers and writers for sites and annual maxima.

use crate::error::{Error, Result};
use crate::margins::{DataMatrix, ScaleTag};
use crate::spatial::SiteSet;
use std::io::{Read, Write};
use std::path::Path;

fn trimmed_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::invalid(format!("cannot parse {what} '{s}' as a number")))
}

/// Reads a `id,x,y` site table.
pub fn read_sites<R: Read>(r: R) -> Result<SiteSet> {
    let mut rdr = trimmed_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["id", "x", "y"] {
        return Err(Error::invalid(format!("sites header must be 'id,x,y', got '{}'", header.join(","))));
    }
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::invalid(format!("sites row {} has {} fields", line + 1, rec.len())));
        }
        ids.push(rec[0].to_string());
        coords.push([parse_f64(&rec[1], "x")?, parse_f64(&rec[2], "y")?]);
    }
    SiteSet::new(ids, coords)
}

pub fn read_sites_file(path: &Path) -> Result<SiteSet> {
    read_sites(std::fs::File::open(path)?)
}

pub fn write_sites<W: Write>(w: W, sites: &SiteSet) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "x", "y"])?;
    for (id, c) in sites.ids.iter().zip(&sites.coords) {
        wtr.write_record([id.clone(), c[0].to_string(), c[1].to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Annual maxima with their row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Maxima {
    pub years: Vec<String>,
    pub data: DataMatrix,
}

/// Reads a `year,<id1>,<id2>,...` table; empty cells are errors.
pub fn read_maxima<R: Read>(r: R, scale: ScaleTag) -> Result<Maxima> {
    let mut rdr = trimmed_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("year") || header.len() < 2 {
        return Err(Error::invalid("maxima header must be 'year' followed by site ids"));
    }
    let ids = header[1..].to_vec();
    let mut years = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::invalid(format!("row for year '{}' has {} fields, expected {}", &rec[0], rec.len(), header.len())));
        }
        let mut row = Vec::with_capacity(ids.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(Error::invalid(format!("missing value for site '{}' in year '{}'", ids[j], &rec[0])));
            }
            row.push(parse_f64(cell, "maximum")?);
        }
        years.push(rec[0].to_string());
        values.push(row);
    }
    Ok(Maxima { years, data: DataMatrix::new(values, scale, ids)? })
}

pub fn read_maxima_file(path: &Path, scale: ScaleTag) -> Result<Maxima> {
    read_maxima(std::fs::File::open(path)?, scale)
}

pub fn write_maxima<W: Write>(w: W, years: &[String], data: &DataMatrix) -> Result<()> {
    if years.len() != data.n_reps() {
        return Err(Error::invalid("one year label per replicate is required"));
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["year".to_string()];
    header.extend(data.site_ids.iter().cloned());
    wtr.write_record(&header)?;
    for (y, row) in years.iter().zip(&data.values) {
        let mut rec = vec![y.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Restricts and reorders `sites` to the columns of `data`.
pub fn align_sites(sites: &SiteSet, data: &DataMatrix) -> Result<SiteSet> {
    let idx: Vec<usize> = data
        .site_ids
        .iter()
        .map(|id| {
            sites.ids.iter().position(|s| s == id).ok_or_else(|| Error::invalid(format!("site '{id}' has no coordinates")))
        })
        .collect::<Result<_>>()?;
    sites.subset(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sites_round_trip_and_strictness() {
        let s = read_sites("id,x,y\na,0,1\nb, 2.5 ,3\n".as_bytes()).unwrap();
        assert_eq!(s.ids, vec!["a", "b"]);
        assert_eq!(s.coords[1], [2.5, 3.0]);
        let mut buf = Vec::new();
        write_sites(&mut buf, &s).unwrap();
        assert_eq!(read_sites(buf.as_slice()).unwrap(), s);
        assert!(read_sites("id,x,y\na,0,1\na,2,3\n".as_bytes()).is_err());
        assert!(read_sites("name,x,y\na,0,1\nb,2,3\n".as_bytes()).is_err());
        assert!(read_sites("id,x,y\na,0,q\nb,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn maxima_round_trip_and_missing() {
        let text = "year,a,b\n1990,1.5,2\n1991,0.7,3.25\n";
        let m = read_maxima(text.as_bytes(), ScaleTag::UnitFrechet).unwrap();
        assert_eq!(m.years, vec!["1990", "1991"]);
        assert_eq!(m.data.values[1], vec![0.7, 3.25]);
        let mut buf = Vec::new();
        write_maxima(&mut buf, &m.years, &m.data).unwrap();
        assert_eq!(read_maxima(buf.as_slice(), ScaleTag::UnitFrechet).unwrap(), m);
        assert!(read_maxima("year,a,b\n1990,1.5,\n".as_bytes(), ScaleTag::RawGev).is_err());
        assert!(read_maxima("year,a,b\n1990,1.5\n".as_bytes(), ScaleTag::RawGev).is_err());
    }

    #[test]
    fn alignment_follows_data_columns() {
        let s = read_sites("id,x,y\na,0,0\nb,1,0\nc,2,0\n".as_bytes()).unwrap();
        let m = read_maxima("year,c,a\n1,1,2\n2,3,4\n".as_bytes(), ScaleTag::UnitFrechet).unwrap();
        let al = align_sites(&s, &m.data).unwrap();
        assert_eq!(al.ids, vec!["c", "a"]);
        assert_eq!(al.coords[0], [2.0, 0.0]);
        let bad = read_maxima("year,z,a\n1,1,2\n".as_bytes(), ScaleTag::UnitFrechet).unwrap();
        assert!(align_sites(&s, &bad.data).is_err());
    }
}
