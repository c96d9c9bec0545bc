//! Staged flow graphs: a 3-stage protocol Sankey and a 6-stage
//! communication graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::classify::{AppTag, ClassifiedPacket};

pub const DEFAULT_PORT_INTERVAL: u16 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GraphMode {
    /// transport -> encryption status -> protocol category, app data only.
    Sankey3,
    /// source IP -> transport -> source port interval -> destination port ->
    /// destination IP -> app, all packets, oriented client to server.
    CommGraph6,
}

impl GraphMode {
    pub fn stages(self) -> &'static [&'static str] {
        match self {
            GraphMode::Sankey3 => &["transport", "encryption", "protocol"],
            GraphMode::CommGraph6 => &["src_ip", "transport", "src_port_interval", "dst_port", "dst_ip", "app"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphNode {
    pub id: usize,
    pub stage: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphLink {
    pub source: usize,
    pub target: usize,
    pub packets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowGraph {
    pub mode: GraphMode,
    pub stages: Vec<String>,
    pub nodes: Vec<GraphNode>,
    pub links: Vec<GraphLink>,
}

impl FlowGraph {
    pub fn node(&self, stage: usize, label: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.stage == stage && n.label == label)
    }

    pub fn link_weight(&self, source: usize, target: usize) -> u64 {
        self.links
            .iter()
            .filter(|l| l.source == source && l.target == target)
            .map(|l| l.packets)
            .sum()
    }

    pub fn inflow(&self, id: usize) -> u64 {
        self.links.iter().filter(|l| l.target == id).map(|l| l.packets).sum()
    }

    pub fn outflow(&self, id: usize) -> u64 {
        self.links.iter().filter(|l| l.source == id).map(|l| l.packets).sum()
    }

    pub fn stage_nodes(&self, stage: usize) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(move |n| n.stage == stage)
    }
}

fn port_interval(port: u16, width: u16) -> String {
    let width = u32::from(width.max(1));
    let lo = u32::from(port) / width * width;
    let hi = (lo + width - 1).min(65_535);
    format!("{lo}-{hi}")
}

fn path_for(mode: GraphMode, app: &str, p: &ClassifiedPacket, port_width: u16) -> Option<Vec<String>> {
    match mode {
        GraphMode::Sankey3 => {
            if !p.is_app_data {
                return None;
            }
            let status = if p.protocol.is_encrypted() { "Encrypted" } else { "Cleartext" };
            let protocol = match p.protocol.tag {
                AppTag::OtherTcp | AppTag::OtherUdp => return None,
                _ => p.protocol.category().label(),
            };
            Some(vec![p.record.transport.as_str().into(), status.into(), protocol.into()])
        }
        GraphMode::CommGraph6 => {
            let ((src_ip, src_port), (dst_ip, dst_port)) = p.client_server();
            Some(vec![
                src_ip.to_string(),
                p.record.transport.as_str().into(),
                port_interval(src_port, port_width),
                dst_port.to_string(),
                dst_ip.to_string(),
                app.to_string(),
            ])
        }
    }
}

type StageLabel = (usize, String);

/// Builds the graph over `(app name, packets)` pairs. Node ids are assigned
/// in (stage, label) order so output does not depend on input order.
pub fn flow_graph<'a>(
    captures: impl IntoIterator<Item = (&'a str, &'a [ClassifiedPacket])>,
    mode: GraphMode,
    port_width: u16,
) -> FlowGraph {
    let mut edges: BTreeMap<(StageLabel, StageLabel), u64> = BTreeMap::new();
    let mut labels: BTreeSet<StageLabel> = BTreeSet::new();
    for (app, packets) in captures {
        for p in packets {
            let Some(path) = path_for(mode, app, p, port_width) else {
                continue;
            };
            for (stage, label) in path.iter().enumerate() {
                labels.insert((stage, label.clone()));
            }
            for (stage, pair) in path.windows(2).enumerate() {
                *edges
                    .entry(((stage, pair[0].clone()), (stage + 1, pair[1].clone())))
                    .or_default() += 1;
            }
        }
    }
    let ids: BTreeMap<StageLabel, usize> = labels.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
    FlowGraph {
        mode,
        stages: mode.stages().iter().map(|s| s.to_string()).collect(),
        nodes: ids
            .iter()
            .map(|((stage, label), &id)| GraphNode {
                id,
                stage: *stage,
                label: label.clone(),
            })
            .collect(),
        links: edges
            .into_iter()
            .map(|((a, b), packets)| GraphLink {
                source: ids[&a],
                target: ids[&b],
                packets,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::pkt;
    use super::*;
    use crate::classify::{AppProtocol, TlsVersion};
    use crate::ingest::Transport;

    #[test]
    fn one_https_flow() {
        let v: Vec<_> = (0..10)
            .map(|_| pkt(0.0, Transport::Tcp, AppProtocol::tls(TlsVersion::Tls1_3), true))
            .collect();
        let g = flow_graph([("app", v.as_slice())], GraphMode::Sankey3, DEFAULT_PORT_INTERVAL);
        let tcp = g.node(0, "TCP").unwrap().id;
        let enc = g.node(1, "Encrypted").unwrap().id;
        let tls = g.node(2, "TLSv1.3").unwrap().id;
        assert_eq!(g.link_weight(tcp, enc), 10);
        assert_eq!(g.link_weight(enc, tls), 10);
    }

    #[test]
    fn comm_graph_conserves() {
        let mut v = Vec::new();
        for (i, port) in [443u16, 853, 80, 53].into_iter().enumerate() {
            let mut p = pkt(i as f64, Transport::Tcp, AppProtocol::OTHER_TCP, false);
            p.record.dst_port = port;
            v.push(p);
        }
        let g = flow_graph([("com.reddit.frontpage", v.as_slice())], GraphMode::CommGraph6, DEFAULT_PORT_INTERVAL);
        assert_eq!(g.stage_nodes(3).count(), 4);
        assert_eq!(g.node(2, "36864-40959").map(|n| n.stage), Some(2));
        for n in g.nodes.iter().filter(|n| n.stage > 0 && n.stage < 5) {
            assert_eq!(g.inflow(n.id), g.outflow(n.id));
        }
    }
}
