//! BVH 1.0 reader and writer.
//!
//! Joints are stored in file traversal order; `End Site` blocks become leaf
//! joints named `<parent>_end`. Euler channels are folded into one unit
//! quaternion per joint in the declared order, i.e. `CHANNELS 3 Zrotation
//! Xrotation Yrotation` yields `Rz * Rx * Ry`. Position channels on non-root
//! joints are accepted and ignored (the static offset is used).

use std::fmt::Write as _;
use std::sync::Arc;

use super::{Joint, MotionClip, Pose, Quat, Skeleton, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Channel {
    Pos(usize),
    Rot(usize),
}

impl Channel {
    fn parse(name: &str) -> Option<Channel> {
        let axis = match name.as_bytes().first()? {
            b'X' | b'x' => 0,
            b'Y' | b'y' => 1,
            b'Z' | b'z' => 2,
            _ => return None,
        };
        match &name[1..].to_ascii_lowercase()[..] {
            "position" => Some(Channel::Pos(axis)),
            "rotation" => Some(Channel::Rot(axis)),
            _ => None,
        }
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        let tok = self.items.get(self.pos).copied().ok_or_else(|| Error::Bvh {
            line: self.last_line,
            msg: "unexpected end of hierarchy".into(),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.1)
    }

    fn expect(&mut self, word: &str) -> Result<usize> {
        let (line, tok) = self.next()?;
        if tok != word {
            return Err(Error::Bvh {
                line,
                msg: format!("expected {word:?}, found {tok:?}"),
            });
        }
        Ok(line)
    }

    fn float(&mut self) -> Result<f64> {
        let (line, tok) = self.next()?;
        parse_float(tok, line)
    }
}

fn parse_float(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Bvh {
            line,
            msg: format!("expected a number, found {tok:?}"),
        })
}

struct Builder {
    joints: Vec<Joint>,
    channels: Vec<Vec<Channel>>,
}

impl Builder {
    fn joint(&mut self, toks: &mut Tokens, parent: Option<usize>, name: String) -> Result<()> {
        toks.expect("{")?;
        toks.expect("OFFSET")?;
        let offset = Vec3::new(toks.float()?, toks.float()?, toks.float()?);
        let index = self.joints.len();
        self.joints.push(Joint {
            name,
            parent,
            offset,
            end_site: false,
        });
        let (line, tok) = toks.next()?;
        if tok != "CHANNELS" {
            return Err(Error::Bvh {
                line,
                msg: format!("expected CHANNELS, found {tok:?}"),
            });
        }
        let (line, count) = toks.next()?;
        let count: usize = count.parse().map_err(|_| Error::Bvh {
            line,
            msg: format!("bad channel count {count:?}"),
        })?;
        if count != 3 && count != 6 {
            return Err(Error::Bvh {
                line,
                msg: format!("unsupported channel arity {count} (expected 3 or 6)"),
            });
        }
        let mut chans = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, name) = toks.next()?;
            chans.push(Channel::parse(name).ok_or_else(|| Error::Bvh {
                line,
                msg: format!("unknown channel {name:?}"),
            })?);
        }
        self.channels.push(chans);

        loop {
            let (line, tok) = toks.next()?;
            match tok {
                "}" => return Ok(()),
                "JOINT" => {
                    let (_, child) = toks.next()?;
                    self.joint(toks, Some(index), child.to_string())?;
                }
                "End" => {
                    toks.expect("Site")?;
                    toks.expect("{")?;
                    toks.expect("OFFSET")?;
                    let offset = Vec3::new(toks.float()?, toks.float()?, toks.float()?);
                    toks.expect("}")?;
                    let name = format!("{}_end", self.joints[index].name);
                    self.joints.push(Joint {
                        name,
                        parent: Some(index),
                        offset,
                        end_site: true,
                    });
                    self.channels.push(Vec::new());
                }
                other => {
                    return Err(Error::Bvh {
                        line,
                        msg: format!("unexpected token {other:?} in joint block"),
                    })
                }
            }
        }
    }
}

/// Parse BVH text into a skeleton and its motion.
pub fn parse_bvh(source: &str) -> Result<(Arc<Skeleton>, MotionClip)> {
    let lines: Vec<&str> = source.lines().collect();
    let motion_line = lines
        .iter()
        .position(|l| l.trim() == "MOTION")
        .ok_or_else(|| Error::Bvh {
            line: lines.len(),
            msg: "missing MOTION section".into(),
        })?;

    let items = lines[..motion_line]
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
        .collect();
    let mut toks = Tokens {
        items,
        pos: 0,
        last_line: motion_line,
    };
    toks.expect("HIERARCHY")?;
    toks.expect("ROOT")?;
    let (_, root_name) = toks.next()?;
    let mut builder = Builder {
        joints: Vec::new(),
        channels: Vec::new(),
    };
    builder.joint(&mut toks, None, root_name.to_string())?;
    if let Some(extra) = toks.peek() {
        return Err(Error::Bvh {
            line: toks.items[toks.pos].0,
            msg: format!("unexpected {extra:?} after the root joint"),
        });
    }
    let Builder { joints, channels } = builder;
    let skeleton = Arc::new(Skeleton::new("bvh", joints).map_err(|e| Error::Bvh {
        line: 1,
        msg: e.to_string(),
    })?);

    // MOTION section: `Frames: n`, `Frame Time: t`, then one line per frame.
    let mut rest = lines
        .iter()
        .enumerate()
        .skip(motion_line + 1)
        .filter(|(_, l)| !l.trim().is_empty());
    let (line, frames_line) = rest.next().ok_or_else(|| Error::Bvh {
        line: motion_line + 1,
        msg: "missing Frames line".into(),
    })?;
    let declared: usize = frames_line
        .trim()
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Bvh {
            line: line + 1,
            msg: format!("expected `Frames: <n>`, found {:?}", frames_line.trim()),
        })?;
    let (line, time_line) = rest.next().ok_or_else(|| Error::Bvh {
        line: line + 2,
        msg: "missing Frame Time line".into(),
    })?;
    let frame_time = time_line
        .trim()
        .strip_prefix("Frame Time:")
        .map(str::trim)
        .ok_or_else(|| Error::Bvh {
            line: line + 1,
            msg: format!("expected `Frame Time: <t>`, found {:?}", time_line.trim()),
        })
        .and_then(|t| parse_float(t, line + 1))?;
    if frame_time <= 0.0 {
        return Err(Error::Bvh {
            line: line + 1,
            msg: format!("Frame Time must be positive, got {frame_time}"),
        });
    }
    let fps = (1.0 / frame_time).round().max(1.0) as u32;

    let total_channels: usize = channels.iter().map(Vec::len).sum();
    let root = skeleton.root_index();
    let root_offset = skeleton.joints()[root].offset;
    let mut frames = Vec::with_capacity(declared);
    for (idx, text) in rest {
        let line = idx + 1;
        let values = text
            .split_whitespace()
            .map(|t| parse_float(t, line))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != total_channels {
            return Err(Error::Bvh {
                line,
                msg: format!("expected {total_channels} values, found {}", values.len()),
            });
        }
        let mut pose = Pose::identity(skeleton.len());
        pose.root_translation = root_offset;
        let mut cursor = values.iter();
        for (j, chans) in channels.iter().enumerate() {
            let mut rot = Quat::identity();
            for ch in chans {
                let v = *cursor.next().expect("length checked above");
                match *ch {
                    Channel::Pos(axis) if j == root => pose.root_translation[axis] += v,
                    Channel::Pos(_) => {}
                    Channel::Rot(axis) => rot *= axis_rotation(axis, v.to_radians()),
                }
            }
            pose.joint_rotations[j] = rot;
        }
        frames.push(pose);
    }
    if frames.len() != declared {
        return Err(Error::Bvh {
            line: lines.len(),
            msg: format!("declared {declared} frames but found {}", frames.len()),
        });
    }

    let clip = MotionClip {
        skeleton: skeleton.clone(),
        fps,
        frames,
        partner_frames: None,
        action_label: "bvh".into(),
        variant_id: 0,
    };
    Ok((skeleton, clip))
}

fn axis_rotation(axis: usize, radians: f64) -> Quat {
    let a = match axis {
        0 => Vec3::x_axis(),
        1 => Vec3::y_axis(),
        _ => Vec3::z_axis(),
    };
    Quat::from_axis_angle(&a, radians)
}

/// Serialize a single-actor clip. Every joint is written with `Zrotation
/// Yrotation Xrotation` channels; the root additionally carries positions.
pub fn write_bvh(clip: &MotionClip) -> String {
    let skeleton = &clip.skeleton;
    let mut children = vec![Vec::new(); skeleton.len()];
    for (p, c) in skeleton.bones() {
        children[p].push(c);
    }
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, skeleton, &children, skeleton.root_index(), 0);

    let root = skeleton.root_index();
    let root_offset = skeleton.joints()[root].offset;
    let order = traversal(&children, root);
    let _ = writeln!(out, "MOTION\nFrames: {}", clip.frames.len());
    let _ = writeln!(out, "Frame Time: {:.10}", 1.0 / clip.fps as f64);
    for pose in &clip.frames {
        let mut vals: Vec<String> = Vec::new();
        for &j in &order {
            if skeleton.joints()[j].end_site {
                continue;
            }
            if j == root {
                let t = pose.root_translation - root_offset;
                vals.extend(t.iter().map(|v| format!("{v:.9}")));
            }
            let (roll, pitch, yaw) = pose.joint_rotations[j].euler_angles();
            vals.extend([yaw, pitch, roll].iter().map(|a| format!("{:.9}", a.to_degrees())));
        }
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

fn traversal(children: &[Vec<usize>], root: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(children.len());
    let mut stack = vec![root];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    order
}

fn write_joint(out: &mut String, s: &Skeleton, children: &[Vec<usize>], j: usize, depth: usize) {
    let pad = "  ".repeat(depth);
    let joint = &s.joints()[j];
    let o = joint.offset;
    if joint.end_site {
        let _ = writeln!(out, "{pad}End Site\n{pad}{{");
        let _ = writeln!(out, "{pad}  OFFSET {:.9} {:.9} {:.9}", o.x, o.y, o.z);
        let _ = writeln!(out, "{pad}}}");
        return;
    }
    let keyword = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{keyword} {}\n{pad}{{", joint.name);
    let _ = writeln!(out, "{pad}  OFFSET {:.9} {:.9} {:.9}", o.x, o.y, o.z);
    if joint.parent.is_none() {
        let _ = writeln!(
            out,
            "{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation"
        );
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 Zrotation Yrotation Xrotation");
    }
    for &c in &children[j] {
        write_joint(out, s, children, c, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}
