//! Server-rendered status page: one table row per device, no client
//! scripting. A pure function of store state so it can be snapshotted.

use super::store::GatewayStore;

/// Escape the five HTML-significant characters.
fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Render the device table. The empty store yields the header row only;
/// devices appear in sorted order with their latest accepted record, and an
/// alarmed device carries a marked `ALARM` cell.
pub fn render_status_page(store: &GatewayStore) -> String {
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str("<title>GasGuard Status</title>\n");
    html.push_str(
        "<style>table{border-collapse:collapse}td,th{border:1px solid #888;padding:4px 8px}\
         td.alarm{background:#c00;color:#fff;font-weight:bold}</style>\n",
    );
    html.push_str("</head>\n<body>\n<h1>GasGuard Status</h1>\n<table>\n");
    html.push_str(
        "<tr><th>Device</th><th>Gas</th><th>ppm</th><th>ADC</th>\
         <th>Status</th><th>Timestamp (ms)</th><th>Seq</th></tr>\n",
    );
    for id in store.device_ids() {
        // device_ids only lists devices with at least one record.
        let r = store.query_latest(&id).expect("listed device has a record");
        let status = if r.alarm {
            "<td class=\"alarm\">ALARM</td>"
        } else {
            "<td>ok</td>"
        };
        html.push_str(&format!(
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td>{}<td>{}</td><td>{}</td></tr>\n",
            escape_html(&r.device_id),
            r.gas.name(),
            r.ppm,
            r.adc_code,
            status,
            r.timestamp_ms,
            r.seq,
        ));
    }
    html.push_str("</table>\n</body>\n</html>\n");
    html
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::wire::TelemetryRecord;
    use crate::sensor::GasSpecies;

    fn store_with(records: &[TelemetryRecord]) -> GatewayStore {
        let mut store = GatewayStore::new();
        for r in records {
            store.ingest(r.clone()).unwrap();
        }
        store
    }

    fn record(device_id: &str, ppm: u32, alarm: bool) -> TelemetryRecord {
        TelemetryRecord {
            device_id: device_id.to_string(),
            seq: 0,
            timestamp_ms: 1234,
            gas: GasSpecies::LPG,
            ppm,
            adc_code: 500,
            alarm,
        }
    }

    #[test]
    fn empty_store_renders_header_only() {
        let page = render_status_page(&GatewayStore::new());
        assert!(page.contains("<th>Device</th>"));
        assert_eq!(page.matches("<tr>").count(), 1);
        assert!(!page.contains("ALARM"));
    }

    #[test]
    fn alarmed_device_gets_a_marked_cell() {
        let store = store_with(&[record("kitchen-1", 1500, true), record("hall_2", 10, false)]);
        let page = render_status_page(&store);
        assert!(page.contains("kitchen-1"));
        assert!(page.contains("hall_2"));
        assert_eq!(page.matches("ALARM").count(), 1);
        assert!(page.contains("<td class=\"alarm\">ALARM</td>"));
    }

    #[test]
    fn page_reflects_the_latest_record() {
        let mut store = store_with(&[record("dev1", 100, false)]);
        let mut next = record("dev1", 777, false);
        next.seq = 1;
        store.ingest(next).unwrap();
        let page = render_status_page(&store);
        assert!(page.contains("<td>777</td>"));
        assert!(!page.contains("<td>100</td>"));
    }

    #[test]
    fn html_escaping_covers_all_significant_chars() {
        assert_eq!(
            escape_html(r#"<a & "b" 'c'>"#),
            "&lt;a &amp; &quot;b&quot; &#39;c&#39;&gt;"
        );
    }
}
