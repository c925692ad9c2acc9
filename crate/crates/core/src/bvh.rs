//! BVH reader and writer.
//!
//! The reader accepts the usual `HIERARCHY` / `MOTION` layout with any
//! whitespace, `\n` or `\r\n` line endings and joint names containing spaces.
//! The writer emits tab indentation, `\n` line endings and six fractional
//! digits for every number, so a parse of the written text reproduces the
//! motion values to within `1e-4`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvhError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    SyntaxError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("motion row {row} has {found} values, the hierarchy declares {expected} channels")]
    ChannelMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("motion section contains no frames")]
    EmptyMotion,
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
}

/// One of the six BVH channel kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn is_rotation(self) -> bool {
        matches!(self, Channel::Xrotation | Channel::Yrotation | Channel::Zrotation)
    }

    pub fn is_position(self) -> bool {
        !self.is_rotation()
    }

    /// Axis index, 0 for X, 1 for Y and 2 for Z.
    pub fn axis(self) -> usize {
        match self {
            Channel::Xposition | Channel::Xrotation => 0,
            Channel::Yposition | Channel::Yrotation => 1,
            Channel::Zposition | Channel::Zrotation => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Some exporters vary the capitalisation.
        match s.to_ascii_lowercase().as_str() {
            "xposition" => Ok(Channel::Xposition),
            "yposition" => Ok(Channel::Yposition),
            "zposition" => Ok(Channel::Zposition),
            "xrotation" => Ok(Channel::Xrotation),
            "yrotation" => Ok(Channel::Yrotation),
            "zrotation" => Ok(Channel::Zrotation),
            _ => Err(()),
        }
    }
}

/// A joint or end site exactly as declared in the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub channels: Vec<Channel>,
    pub is_end_site: bool,
}

/// The motion section: one row per frame, one column per declared channel.
///
/// Rotation values are in degrees, position values in skeleton units.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMotion {
    pub frame_time: f64,
    pub values: Array2<f64>,
}

impl RawMotion {
    pub fn frame_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.frame_time
    }
}

/// Total number of channels declared by a hierarchy.
pub fn channel_count(joints: &[RawJoint]) -> usize {
    joints.iter().map(|j| j.channels.len()).sum()
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn tokenize_line(line: &str, line_no: usize) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    line: line_no,
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            line: line_no,
            column: s + 1,
        });
    }
    out
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> BvhError {
    BvhError::SyntaxError {
        line,
        column,
        message: message.into(),
    }
}

struct HierarchyParser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    eof_line: usize,
    joints: Vec<RawJoint>,
}

impl<'a> HierarchyParser<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>, BvhError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(syntax(self.eof_line, 1, format!("unexpected end of hierarchy, expected {what}"))),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<Token<'a>, BvhError> {
        let t = self.next(keyword)?;
        if t.text != keyword {
            return Err(syntax(t.line, t.column, format!("expected `{keyword}`, found `{}`", t.text)));
        }
        Ok(t)
    }

    fn number(&mut self) -> Result<f64, BvhError> {
        let t = self.next("a number")?;
        t.text
            .parse::<f64>()
            .map_err(|_| syntax(t.line, t.column, format!("expected a number, found `{}`", t.text)))
    }

    /// Remaining tokens on the keyword's line form the name.
    fn name_after(&mut self, keyword: &Token<'a>) -> Result<String, BvhError> {
        let mut parts = Vec::new();
        while let Some(t) = self.peek() {
            if t.line != keyword.line {
                break;
            }
            parts.push(t.text);
            self.pos += 1;
        }
        if parts.is_empty() {
            return Err(syntax(keyword.line, keyword.column, format!("`{}` without a name", keyword.text)));
        }
        Ok(parts.join(" "))
    }

    fn offset(&mut self) -> Result<[f64; 3], BvhError> {
        self.expect("OFFSET")?;
        Ok([self.number()?, self.number()?, self.number()?])
    }

    fn channels(&mut self) -> Result<Vec<Channel>, BvhError> {
        self.expect("CHANNELS")?;
        let t = self.next("a channel count")?;
        let n: usize = t
            .text
            .parse()
            .map_err(|_| syntax(t.line, t.column, format!("invalid channel count `{}`", t.text)))?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let c = self.next("a channel name")?;
            let channel: Channel = c
                .text
                .parse()
                .map_err(|_| syntax(c.line, c.column, format!("unknown channel `{}`", c.text)))?;
            if out.contains(&channel) {
                return Err(syntax(c.line, c.column, format!("duplicate channel `{}`", c.text)));
            }
            out.push(channel);
        }
        Ok(out)
    }

    fn joint(&mut self, name: String, parent: Option<usize>) -> Result<(), BvhError> {
        self.expect("{")?;
        let offset = self.offset()?;
        let channels = match self.peek() {
            Some(t) if t.text == "CHANNELS" => self.channels()?,
            _ => Vec::new(),
        };
        let index = self.joints.len();
        self.joints.push(RawJoint {
            name,
            parent,
            offset,
            channels,
            is_end_site: false,
        });
        loop {
            let t = self.next("`}`")?;
            match t.text {
                "}" => return Ok(()),
                "JOINT" => {
                    let child = self.name_after(&t)?;
                    self.joint(child, Some(index))?;
                }
                "End" => {
                    self.expect("Site")?;
                    self.expect("{")?;
                    let offset = self.offset()?;
                    self.expect("}")?;
                    self.joints.push(RawJoint {
                        name: "End Site".to_string(),
                        parent: Some(index),
                        offset,
                        channels: Vec::new(),
                        is_end_site: true,
                    });
                }
                other => {
                    return Err(syntax(
                        t.line,
                        t.column,
                        format!("expected `JOINT`, `End Site` or `}}`, found `{other}`"),
                    ))
                }
            }
        }
    }
}

/// Parses a BVH document.
///
/// Joints (including end sites) are returned in depth-first document order,
/// channel order is preserved verbatim.
pub fn parse_bvh(text: &str) -> Result<(Vec<RawJoint>, RawMotion), BvhError> {
    let lines: Vec<&str> = text.lines().collect();

    let mut hierarchy_tokens = Vec::new();
    let mut motion_line = None;
    let mut seen_hierarchy = false;
    for (i, line) in lines.iter().enumerate() {
        let tokens = tokenize_line(line, i + 1);
        if let Some(first) = tokens.first() {
            if !seen_hierarchy {
                if first.text != "HIERARCHY" {
                    return Err(syntax(first.line, first.column, "expected `HIERARCHY`"));
                }
                seen_hierarchy = true;
                hierarchy_tokens.extend(tokens.into_iter().skip(1));
                continue;
            }
            if first.text == "MOTION" {
                motion_line = Some(i);
                break;
            }
        }
        hierarchy_tokens.extend(tokens);
    }
    if !seen_hierarchy {
        return Err(syntax(1, 1, "empty document, expected `HIERARCHY`"));
    }
    let motion_line = motion_line.ok_or_else(|| syntax(lines.len().max(1), 1, "missing `MOTION` section"))?;

    let mut parser = HierarchyParser {
        tokens: hierarchy_tokens,
        pos: 0,
        eof_line: motion_line + 1,
        joints: Vec::new(),
    };
    let root = parser.expect("ROOT")?;
    let root_name = parser.name_after(&root)?;
    parser.joint(root_name, None)?;
    if let Some(t) = parser.peek() {
        let message = if t.text == "ROOT" {
            "multiple roots are not supported".to_string()
        } else {
            format!("unexpected `{}` after the root joint", t.text)
        };
        return Err(syntax(t.line, t.column, message));
    }
    let joints = parser.joints;
    let width = channel_count(&joints);

    // MOTION section: frame count, frame time, then one row per frame.
    let mut rest = lines
        .iter()
        .enumerate()
        .skip(motion_line + 1)
        .map(|(i, l)| (i + 1, tokenize_line(l, i + 1)))
        .filter(|(_, t)| !t.is_empty());

    let (line_no, frames_tokens) = rest
        .next()
        .ok_or_else(|| syntax(motion_line + 2, 1, "expected `Frames:`"))?;
    if frames_tokens[0].text != "Frames:" || frames_tokens.len() != 2 {
        return Err(syntax(line_no, frames_tokens[0].column, "expected `Frames: <count>`"));
    }
    let frame_count: usize = frames_tokens[1].text.parse().map_err(|_| {
        syntax(line_no, frames_tokens[1].column, format!("invalid frame count `{}`", frames_tokens[1].text))
    })?;

    let (line_no, time_tokens) = rest
        .next()
        .ok_or_else(|| syntax(line_no + 1, 1, "expected `Frame Time:`"))?;
    if time_tokens.len() != 3 || time_tokens[0].text != "Frame" || time_tokens[1].text != "Time:" {
        return Err(syntax(line_no, time_tokens[0].column, "expected `Frame Time: <seconds>`"));
    }
    let frame_time: f64 = time_tokens[2].text.parse().map_err(|_| {
        syntax(line_no, time_tokens[2].column, format!("invalid frame time `{}`", time_tokens[2].text))
    })?;
    if !(frame_time > 0.0 && frame_time.is_finite()) {
        return Err(syntax(line_no, time_tokens[2].column, "frame time must be positive"));
    }
    if frame_count == 0 {
        return Err(BvhError::EmptyMotion);
    }

    let mut values = Array2::<f64>::zeros((frame_count, width));
    let mut row = 0;
    for (line_no, tokens) in rest {
        if row == frame_count {
            return Err(syntax(line_no, 1, format!("more motion rows than the declared {frame_count} frames")));
        }
        if tokens.len() != width {
            return Err(BvhError::ChannelMismatch {
                row,
                expected: width,
                found: tokens.len(),
            });
        }
        for (c, t) in tokens.iter().enumerate() {
            values[[row, c]] = t
                .text
                .parse()
                .map_err(|_| syntax(t.line, t.column, format!("expected a number, found `{}`", t.text)))?;
        }
        row += 1;
    }
    if row != frame_count {
        return Err(syntax(lines.len(), 1, format!("declared {frame_count} frames but found {row}")));
    }

    Ok((joints, RawMotion { frame_time, values }))
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push('\t');
    }
}

fn write_joint(out: &mut String, joints: &[RawJoint], children: &[Vec<usize>], index: usize, depth: usize) {
    let joint = &joints[index];
    let [x, y, z] = joint.offset;
    indent(out, depth);
    if joint.is_end_site {
        out.push_str("End Site\n");
    } else if joint.parent.is_none() {
        let _ = writeln!(out, "ROOT {}", joint.name);
    } else {
        let _ = writeln!(out, "JOINT {}", joint.name);
    }
    indent(out, depth);
    out.push_str("{\n");
    indent(out, depth + 1);
    let _ = writeln!(out, "OFFSET {x:.6} {y:.6} {z:.6}");
    if !joint.is_end_site {
        indent(out, depth + 1);
        let _ = write!(out, "CHANNELS {}", joint.channels.len());
        for c in &joint.channels {
            let _ = write!(out, " {c}");
        }
        out.push('\n');
    }
    for &child in &children[index] {
        write_joint(out, joints, children, child, depth + 1);
    }
    indent(out, depth);
    out.push_str("}\n");
}

/// Serialises a hierarchy and its motion.
pub fn write_bvh(joints: &[RawJoint], motion: &RawMotion) -> Result<String, BvhError> {
    let root = match joints.first() {
        Some(j) if j.parent.is_none() && !j.is_end_site => 0,
        _ => return Err(BvhError::InvalidSkeleton("the first joint must be the root".into())),
    };
    let mut children = vec![Vec::new(); joints.len()];
    for (i, j) in joints.iter().enumerate().skip(1) {
        match j.parent {
            Some(p) if p < i && !joints[p].is_end_site => children[p].push(i),
            _ => {
                return Err(BvhError::InvalidSkeleton(format!(
                    "joint {i} (`{}`) must have an earlier non-end-site parent",
                    j.name
                )))
            }
        }
        if j.is_end_site && !j.channels.is_empty() {
            return Err(BvhError::InvalidSkeleton("end sites carry no channels".into()));
        }
    }
    let width = channel_count(joints);
    if motion.values.ncols() != width {
        return Err(BvhError::ChannelMismatch {
            row: 0,
            expected: width,
            found: motion.values.ncols(),
        });
    }
    if motion.frame_count() == 0 {
        return Err(BvhError::EmptyMotion);
    }

    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, joints, &children, root, 0);
    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", motion.frame_count());
    let _ = writeln!(out, "Frame Time: {:.6}", motion.frame_time);
    for row in motion.values.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:.6}");
        }
        out.push('\n');
    }
    Ok(out)
}
