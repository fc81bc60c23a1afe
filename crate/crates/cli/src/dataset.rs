//! CSV input datasets: `x,y` for stumps and `x1,..,xp,y` for planes.

use std::path::Path;

use robust_cp::changeplane::Design;
use robust_cp::stump::Dataset1D;

fn read(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| format!("{}: {e}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    format!(
                        "{}: row {}, column {}: '{cell}' is not a number",
                        path.display(),
                        line + 1,
                        headers[j]
                    )
                })
            })
            .collect::<Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    Ok((headers, rows))
}

fn column(headers: &[String], name: &str, path: &Path) -> Result<usize, String> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| format!("{}: missing column '{name}'", path.display()))
}

pub fn read_stump(path: &Path) -> Result<Dataset1D, String> {
    let (headers, rows) = read(path)?;
    let (ix, iy) = (column(&headers, "x", path)?, column(&headers, "y", path)?);
    let x = rows.iter().map(|r| r[ix]).collect();
    let y = rows.iter().map(|r| r[iy]).collect();
    Dataset1D::new(x, y).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn read_plane(path: &Path) -> Result<Design, String> {
    let (headers, rows) = read(path)?;
    let iy = column(&headers, "y", path)?;
    let p = (1..)
        .take_while(|j| headers.iter().any(|h| *h == format!("x{j}")))
        .count();
    if p == 0 {
        return Err(format!("{}: no covariate columns x1..xp", path.display()));
    }
    let cols = (1..=p)
        .map(|j| column(&headers, &format!("x{j}"), path))
        .collect::<Result<Vec<_>, _>>()?;
    let x = rows.iter().flat_map(|r| cols.iter().map(|&c| r[c])).collect();
    let y = rows.iter().map(|r| r[iy]).collect();
    Design::from_flat(p, x, y).map_err(|e| format!("{}: {e}", path.display()))
}
